#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "oracles.hpp"
#include "ovt/gradcheck.hpp"
#include "ovt/model.hpp"
#include "ovt/rng.hpp"

using ovt::EncoderArch;
using ovt::EncoderConfig;
using ovt::Matrix;
using ovt::ModelState;
using ovt::Vec;

namespace {

EncoderConfig linear_config(std::size_t in, std::size_t d) {
    EncoderConfig c;
    c.input_dim = in;
    c.embed_dim = d;
    c.architecture = EncoderArch::Linear;
    return c;
}

EncoderConfig attention_config(std::size_t t, std::size_t h, std::size_t d) {
    EncoderConfig c;
    c.input_dim = t * h;
    c.embed_dim = d;
    c.architecture = EncoderArch::SingleAttentionBlock;
    c.token_count = t;
    c.token_dim = h;
    return c;
}

ovt::ViformerParams random_viformer(std::size_t d, ovt::Rng& rng) {
    ovt::ViformerParams p;
    p.wq = Matrix(d, d, rng.gaussian_vec(d * d, 0.0, 0.5));
    p.wk = Matrix(d, d, rng.gaussian_vec(d * d, 0.0, 0.5));
    p.wv = Matrix(d, d, rng.gaussian_vec(d * d, 0.0, 0.5));
    p.wo = Matrix(d, d, rng.gaussian_vec(d * d, 0.0, 0.5));
    p.mlp_in = Matrix(d, 4 * d, rng.gaussian_vec(d * 4 * d, 0.0, 0.5));
    p.mlp_out = Matrix(4 * d, d, rng.gaussian_vec(4 * d * d, 0.0, 0.5));
    p.ln1_gain = rng.gaussian_vec(d, 1.0, 0.1);
    p.ln1_bias = rng.gaussian_vec(d, 0.0, 0.1);
    p.ln2_gain = rng.gaussian_vec(d, 1.0, 0.1);
    p.ln2_bias = rng.gaussian_vec(d, 0.0, 0.1);
    return p;
}

// Straight-line re-evaluation of the block with bare loops; kept independent
// of the library helpers on purpose.
Vec viformer_oracle(const Vec& z, const ovt::ViformerParams& p) {
    const std::size_t d = z.size();
    auto layernorm = [d](const Vec& x, const Vec& g, const Vec& b) {
        double mu = 0, var = 0;
        for (double v : x) mu += v;
        mu /= double(d);
        for (double v : x) var += (v - mu) * (v - mu);
        var /= double(d);
        Vec y(d);
        for (std::size_t i = 0; i < d; ++i) {
            y[i] = g[i] * (x[i] - mu) / std::sqrt(var + 1e-5) + b[i];
        }
        return y;
    };
    auto rowtimes = [](const Vec& x, const Matrix& m) {
        Vec y(m.cols(), 0.0);
        for (std::size_t j = 0; j < m.cols(); ++j)
            for (std::size_t i = 0; i < m.rows(); ++i) y[j] += x[i] * m(i, j);
        return y;
    };
    Vec u = layernorm(z, p.ln1_gain, p.ln1_bias);
    Vec v = rowtimes(u, p.wv);
    // single token: softmax over one score is 1, q/k drop out
    Vec a = rowtimes(v, p.wo);
    Vec zmid(d);
    for (std::size_t i = 0; i < d; ++i) zmid[i] = z[i] + a[i];
    Vec u2 = layernorm(zmid, p.ln2_gain, p.ln2_bias);
    Vec pre = rowtimes(u2, p.mlp_in);
    Vec act(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        act[i] = 0.5 * pre[i] * (1.0 + std::erf(pre[i] / std::numbers::sqrt2));
    }
    Vec mlp = rowtimes(act, p.mlp_out);
    Vec out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = zmid[i] + mlp[i];
    return out;
}

// row-echelon rank with a pivot threshold
std::size_t numeric_rank(Matrix m, double tol = 1e-10) {
    std::size_t rank = 0;
    for (std::size_t col = 0; col < m.cols() && rank < m.rows(); ++col) {
        std::size_t pivot = rank;
        for (std::size_t r = rank + 1; r < m.rows(); ++r) {
            if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
        }
        if (std::abs(m(pivot, col)) <= tol) continue;
        for (std::size_t c = 0; c < m.cols(); ++c) std::swap(m(rank, c), m(pivot, c));
        for (std::size_t r = 0; r < m.rows(); ++r) {
            if (r == rank) continue;
            const double f = m(r, col) / m(rank, col);
            for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= f * m(rank, c);
        }
        ++rank;
    }
    return rank;
}

}  // namespace

TEST_CASE("lora_effective_weight with zero B equals base bitwise") {
    ovt::Rng rng(5);
    ModelState state = ModelState::init(linear_config(6, 4), 2, 0.1, 0.07, false, 99);
    Matrix eff = ovt::lora_effective_weight(state.visual.w_v, state.adapters[0]);
    REQUIRE(eff.size() == state.visual.w_v.size());
    for (std::size_t i = 0; i < eff.size(); ++i) {
        CHECK(eff.data()[i] == state.visual.w_v.data()[i]);
    }
}

TEST_CASE("lora_effective_weight hand case") {
    ovt::LoraAdapter adapter;
    adapter.rank = 1;
    adapter.target = "w";
    adapter.b = Matrix::from_rows({{2.0}, {0.0}});
    adapter.a = Matrix::from_rows({{1.0, 1.0}});
    Matrix eff = ovt::lora_effective_weight(Matrix::identity(2), adapter);
    Matrix expected = ovt::add(Matrix::identity(2), oracle::matmul(adapter.b, adapter.a));
    CHECK(eff(0, 0) == 3.0);
    CHECK(eff(0, 1) == 2.0);
    CHECK(eff(1, 0) == 0.0);
    CHECK(eff(1, 1) == 1.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(eff.data()[i] == expected.data()[i]);
}

TEST_CASE("lora rank bound enforced at construction") {
    ovt::Rng rng(1);
    CHECK_THROWS_AS(ovt::LoraAdapter::create(4, 4, 4, "w", rng), std::invalid_argument);
    CHECK_THROWS_AS(ovt::LoraAdapter::create(4, 8, 4, "w", rng), std::invalid_argument);
    CHECK_THROWS_AS(ovt::LoraAdapter::create(4, 8, 0, "w", rng), std::invalid_argument);
    CHECK_NOTHROW(ovt::LoraAdapter::create(4, 8, 3, "w", rng));
}

TEST_CASE("lora update has rank at most r") {
    ovt::Rng rng(23);
    for (std::size_t r = 1; r <= 3; ++r) {
        auto adapter = ovt::LoraAdapter::create(6, 8, r, "w", rng);
        // push B away from zero so the update is nontrivial
        for (std::size_t i = 0; i < adapter.b.size(); ++i) {
            adapter.b.data()[i] = rng.gaussian(0.0, 1.0);
        }
        Matrix delta = ovt::matmul(adapter.b, adapter.a);
        CHECK(numeric_rank(delta) <= r);
    }
}

TEST_CASE("viformer zero value/output/mlp_out is the identity") {
    ovt::Rng rng(3);
    ovt::ViformerParams p = ovt::ViformerParams::init(8, rng);
    Vec z = rng.gaussian_vec(8, 0.0, 1.0);
    Vec out = ovt::viformer_forward(z, p);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(out[i] == z[i]);
}

TEST_CASE("viformer matches straight-line oracle") {
    ovt::Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 3 + rng.uniform_index(8);
        auto p = random_viformer(d, rng);
        Vec z = rng.gaussian_vec(d, 0.0, 1.5);
        Vec got = ovt::viformer_forward(z, p);
        Vec want = viformer_oracle(z, p);
        for (std::size_t i = 0; i < d; ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("viformer parameter gradients pass finite differences") {
    ovt::Rng rng(47);
    const std::size_t d = 6;
    ModelState state = ModelState::init(linear_config(4, d), 2, 0.1, 0.07, false, 7);
    state.viformer = random_viformer(d, rng);
    Vec z = rng.gaussian_vec(d, 0.0, 1.0);
    Vec probe = rng.gaussian_vec(d, 0.0, 1.0);

    auto f = [&](std::span<const double> params) {
        ModelState s = state;
        ovt::unflatten_trainable(s, params);
        Vec out = ovt::viformer_forward(z, s.viformer);
        return ovt::dot(out, probe);
    };

    ovt::ViformerCache cache;
    ovt::viformer_forward(z, state.viformer, cache);
    ovt::ModelGrads grads = ovt::ModelGrads::zeros_like(state);
    Vec d_z(d, 0.0);
    ovt::viformer_backward(cache, state.viformer, probe, grads.viformer, d_z);

    Vec flat_params = ovt::flatten_trainable(state);
    Vec flat_grads;
    for (const auto& ref : ovt::trainable_params(state, grads)) {
        flat_grads.insert(flat_grads.end(), ref.data, ref.data + ref.size);
    }
    auto report = ovt::finite_difference_check(f, flat_params, flat_grads, 1e-5);
    CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("viformer input gradient passes finite differences") {
    ovt::Rng rng(53);
    const std::size_t d = 5;
    auto p = random_viformer(d, rng);
    Vec z = rng.gaussian_vec(d, 0.0, 1.0);
    Vec probe = rng.gaussian_vec(d, 0.0, 1.0);

    auto f = [&](std::span<const double> zin) {
        Vec out = ovt::viformer_forward(Vec(zin.begin(), zin.end()), p);
        return ovt::dot(out, probe);
    };
    ovt::ViformerCache cache;
    ovt::viformer_forward(z, p, cache);
    ovt::ViformerGrads pg = ovt::ViformerGrads::zeros_like(p);
    Vec d_z(d, 0.0);
    ovt::viformer_backward(cache, p, probe, pg, d_z);
    auto report = ovt::finite_difference_check(f, z, d_z, 1e-5);
    CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("fuse_residual limits and interpolation") {
    Vec z{1.0, 0.0};
    Vec s{0.0, 1.0};
    Vec a0 = ovt::fuse_residual(z, s, 0.0);
    CHECK(a0[0] == 1.0);
    CHECK(a0[1] == 0.0);
    Vec a1 = ovt::fuse_residual(z, s, 1.0);
    CHECK(a1[0] == 0.0);
    CHECK(a1[1] == 1.0);
    Vec mid = ovt::fuse_residual(z, s, 0.1);
    CHECK(mid[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(mid[1] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK_THROWS_AS(ovt::fuse_residual(z, s, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(ovt::fuse_residual(z, s, -0.1), std::invalid_argument);
}

TEST_CASE("encode_image with zero adapters and alpha 0 equals the frozen base bitwise") {
    for (bool attention : {false, true}) {
        EncoderConfig cfg = attention ? attention_config(4, 8, 6) : linear_config(16, 6);
        ModelState state = ModelState::init(cfg, 3, 0.0, 0.07, false, 2024);
        ovt::Rng rng(99);
        for (int trial = 0; trial < 50; ++trial) {
            Vec x = rng.gaussian_vec(cfg.input_dim, 0.0, 1.0);
            Vec got = ovt::encode_image(x, state);
            Vec base;
            if (!attention) {
                base = ovt::matvec(state.visual.w_v, x);
            } else {
                Matrix tokens(cfg.token_count, cfg.token_dim, x);
                Matrix q = ovt::matmul(tokens, state.visual.wq);
                Matrix k = ovt::matmul(tokens, state.visual.wk);
                Matrix v = ovt::matmul(tokens, state.visual.wv);
                Matrix scores = ovt::scale(ovt::matmul(q, ovt::transpose(k)),
                                           1.0 / std::sqrt(double(cfg.token_dim)));
                Matrix probs = ovt::softmax_rows(scores);
                Matrix mix = ovt::matmul(probs, v);
                Matrix out_tokens = ovt::matmul(mix, state.visual.wo);
                Vec pooled(cfg.token_dim, 0.0);
                for (std::size_t i = 0; i < cfg.token_count; ++i)
                    for (std::size_t j = 0; j < cfg.token_dim; ++j) pooled[j] += out_tokens(i, j);
                for (double& p : pooled) p /= double(cfg.token_count);
                base = ovt::matvec(state.visual.w_proj, pooled);
            }
            REQUIRE(got.size() == base.size());
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == base[i]);
        }
    }
}

TEST_CASE("encode_image identity encoder hand case") {
    EncoderConfig cfg = linear_config(2, 2);
    ModelState state = ModelState::init(cfg, 1, 0.0, 0.07, false, 5);
    state.visual.w_v = Matrix::identity(2);
    Vec out = ovt::encode_image(Vec{3.0, 4.0}, state);
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 4.0);
}

TEST_CASE("encode_image is pure") {
    ModelState state = ModelState::init(linear_config(8, 4), 2, 0.1, 0.07, false, 123);
    ovt::Rng rng(7);
    Vec x = rng.gaussian_vec(8, 0.0, 1.0);
    Vec a = ovt::encode_image(x, state);
    Vec b = ovt::encode_image(x, state);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("encode_image rejects dimension mismatch") {
    ModelState state = ModelState::init(linear_config(8, 4), 2, 0.1, 0.07, false, 123);
    CHECK_THROWS_AS(ovt::encode_image(Vec{1.0, 2.0}, state), std::invalid_argument);
}

TEST_CASE("encode_image gradients pass finite differences (both architectures)") {
    ovt::Rng rng(61);
    for (bool attention : {false, true}) {
        EncoderConfig cfg = attention ? attention_config(3, 5, 6) : linear_config(7, 6);
        ModelState state = ModelState::init(cfg, 2, 0.3, 0.07, false, 17);
        // move adapters and viformer off their zero init so every path is live
        Vec params = ovt::flatten_trainable(state);
        for (double& p : params) p += rng.gaussian(0.0, 0.05);
        ovt::unflatten_trainable(state, params);

        Vec x = rng.gaussian_vec(cfg.input_dim, 0.0, 1.0);
        Vec probe = rng.gaussian_vec(cfg.embed_dim, 0.0, 1.0);

        auto f = [&](std::span<const double> pv) {
            ModelState s = state;
            ovt::unflatten_trainable(s, pv);
            return ovt::dot(ovt::encode_image(x, s), probe);
        };

        ovt::EncodeCache cache;
        auto weights = ovt::compose_weights(state);
        ovt::encode_image(x, state, weights, cache);
        ovt::ModelGrads grads = ovt::ModelGrads::zeros_like(state);
        ovt::encode_image_backward(cache, state, weights, probe, grads);

        Vec flat_grads;
        for (const auto& ref : ovt::trainable_params(state, grads)) {
            flat_grads.insert(flat_grads.end(), ref.data, ref.data + ref.size);
        }
        auto report = ovt::finite_difference_check(f, params, flat_grads, 1e-5);
        CHECK(report.max_relative_error < 1e-4);
    }
}

TEST_CASE("encode_text determinism and case folding") {
    ModelState state = ModelState::init(linear_config(8, 4), 2, 0.1, 0.07, false, 11);
    Vec a = ovt::encode_text("A photo of a hammer.", state);
    Vec b = ovt::encode_text("A photo of a hammer.", state);
    Vec c = ovt::encode_text("a PHOTO of A HAMMER", state);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(a[i] == c[i]);
    }
    CHECK_THROWS_AS(ovt::encode_text("", state), std::invalid_argument);
    CHECK_THROWS_AS(ovt::encode_text("!!!", state), std::invalid_argument);
}

TEST_CASE("encode_text separates distinct captions") {
    ModelState state = ModelState::init(linear_config(8, 6), 2, 0.1, 0.07, false, 11);
    const char* captions[] = {
        "a photo of a hammer",  "a photo of a dog",    "a photo of a chair",
        "a photo of a bicycle", "a photo of a guitar", "a photo of a whale",
    };
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = i + 1; j < 6; ++j) {
            Vec zi = ovt::encode_text(captions[i], state);
            Vec zj = ovt::encode_text(captions[j], state);
            bool differ = false;
            for (std::size_t k = 0; k < zi.size(); ++k) differ = differ || zi[k] != zj[k];
            CHECK(differ);
        }
    }
}

TEST_CASE("trainable parameter count identity") {
    for (bool train_tau : {false, true}) {
        ModelState state = ModelState::init(linear_config(12, 6), 3, 0.1, 0.07, train_tau, 8);
        std::size_t expected = 0;
        for (const auto& ad : state.adapters) expected += ad.a.size() + ad.b.size();
        const auto& vf = state.viformer;
        expected += vf.wq.size() + vf.wk.size() + vf.wv.size() + vf.wo.size() +
                    vf.mlp_in.size() + vf.mlp_out.size() + 4 * 6;
        if (train_tau) expected += 1;
        CHECK(state.trainable_parameter_count() == expected);
        std::size_t summed = 0;
        for (const auto& ref : ovt::trainable_params(state)) summed += ref.size;
        CHECK(summed == expected);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    for (bool attention : {false, true}) {
        EncoderConfig cfg = attention ? attention_config(2, 6, 5) : linear_config(10, 5);
        ModelState state = ModelState::init(cfg, 2, 0.25, 0.05, true, 321);
        ovt::Rng rng(77);
        Vec params = ovt::flatten_trainable(state);
        for (double& p : params) p += rng.gaussian(0.0, 0.1);
        ovt::unflatten_trainable(state, params);

        auto path = std::filesystem::temp_directory_path() / "ovt_ckpt_test.bin";
        ovt::save_checkpoint(state, path.string());
        ModelState loaded = ovt::load_checkpoint(path.string());
        std::filesystem::remove(path);

        CHECK(loaded.frozen_checksum() == state.frozen_checksum());
        CHECK(loaded.alpha == state.alpha);
        CHECK(loaded.log_tau == state.log_tau);
        CHECK(loaded.train_temperature == state.train_temperature);
        CHECK(loaded.seed == state.seed);
        Vec p0 = ovt::flatten_trainable(state);
        Vec p1 = ovt::flatten_trainable(loaded);
        REQUIRE(p0.size() == p1.size());
        for (std::size_t i = 0; i < p0.size(); ++i) CHECK(p0[i] == p1[i]);

        ovt::Rng xr(13);
        Vec x = xr.gaussian_vec(cfg.input_dim, 0.0, 1.0);
        Vec e0 = ovt::encode_image(x, state);
        Vec e1 = ovt::encode_image(x, loaded);
        for (std::size_t i = 0; i < e0.size(); ++i) CHECK(e0[i] == e1[i]);
    }
}

TEST_CASE("load_checkpoint rejects missing and truncated files") {
    CHECK_THROWS_AS(ovt::load_checkpoint("/nonexistent/ovt.bin"), std::runtime_error);

    ModelState state = ModelState::init(linear_config(6, 4), 2, 0.1, 0.07, false, 3);
    auto path = std::filesystem::temp_directory_path() / "ovt_ckpt_trunc.bin";
    ovt::save_checkpoint(state, path.string());
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 16);
    CHECK_THROWS_AS(ovt::load_checkpoint(path.string()), std::runtime_error);
    std::filesystem::remove(path);
}
