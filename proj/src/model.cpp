#include "ovt/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace ovt {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kLoraInitStd = 0.02;
constexpr double kTauMin = 1e-3;
constexpr double kTauMax = 10.0;

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

// y = gain .* xhat + bias with xhat = (x - mean) / sqrt(var + eps), biased var
Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, Vec& xhat, double& inv_sigma) {
    const std::size_t n = x.size();
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.resize(n);
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) {
        xhat[i] = (x[i] - mu) * inv_sigma;
        y[i] = gain[i] * xhat[i] + bias[i];
    }
    return y;
}

// input gradient of layer norm given d_xhat
Vec layer_norm_input_grad(const Vec& d_xhat, const Vec& xhat, double inv_sigma) {
    const std::size_t n = d_xhat.size();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m1 += d_xhat[i];
        m2 += d_xhat[i] * xhat[i];
    }
    m1 /= static_cast<double>(n);
    m2 /= static_cast<double>(n);
    Vec dx(n);
    for (std::size_t i = 0; i < n; ++i) {
        dx[i] = inv_sigma * (d_xhat[i] - m1 - xhat[i] * m2);
    }
    return dx;
}

Matrix gaussian_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    return Matrix(r, c, rng.gaussian_vec(r * c, 0.0, stddev));
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;

// add B*A into dB/dA-shaped gradients given dL/d(effective weight)
void accumulate_lora_grads(const LoraAdapter& adapter, const Matrix& d_weff, Matrix& d_a,
                           Matrix& d_b) {
    // effective = base + B*A  =>  dB = dW * A^T, dA = B^T * dW
    Matrix db = matmul(d_weff, transpose(adapter.a));
    Matrix da = matmul(transpose(adapter.b), d_weff);
    d_b = add(d_b, db);
    d_a = add(d_a, da);
}

}  // namespace

std::string to_string(EncoderArch arch) {
    return arch == EncoderArch::Linear ? "linear" : "attention";
}

EncoderArch encoder_arch_from_string(const std::string& s) {
    if (s == "linear") return EncoderArch::Linear;
    if (s == "attention") return EncoderArch::SingleAttentionBlock;
    throw std::invalid_argument("unknown encoder architecture '" + s +
                                "' (expected 'linear' or 'attention')");
}

void EncoderConfig::validate() const {
    if (embed_dim < 2) {
        throw std::invalid_argument("embed_dim must be >= 2");
    }
    if (input_dim == 0) {
        throw std::invalid_argument("input_dim must be positive");
    }
    if (text_buckets == 0) {
        throw std::invalid_argument("text_buckets must be positive");
    }
    if (architecture == EncoderArch::SingleAttentionBlock) {
        if (token_count < 1) {
            throw std::invalid_argument("attention mode requires token_count >= 1");
        }
        if (token_count * token_dim != input_dim) {
            throw std::invalid_argument("attention mode requires token_count*token_dim == input_dim");
        }
    }
}

LoraAdapter LoraAdapter::create(std::size_t out_dim, std::size_t in_dim, std::size_t rank,
                                std::string target, Rng& rng) {
    if (rank < 1 || rank >= std::min(out_dim, in_dim)) {
        throw std::invalid_argument("lora rank " + std::to_string(rank) +
                                    " must satisfy 1 <= r < min(" + std::to_string(in_dim) + ", " +
                                    std::to_string(out_dim) + ")");
    }
    LoraAdapter adapter;
    adapter.rank = rank;
    adapter.target = std::move(target);
    adapter.a = gaussian_matrix(rank, in_dim, kLoraInitStd, rng);
    adapter.b = Matrix(out_dim, rank);
    return adapter;
}

Matrix lora_effective_weight(const Matrix& base, const LoraAdapter& adapter) {
    if (adapter.b.rows() != base.rows() || adapter.a.cols() != base.cols() ||
        adapter.b.cols() != adapter.a.rows()) {
        throw std::invalid_argument("lora shape mismatch for target " + adapter.target);
    }
    return add(base, matmul(adapter.b, adapter.a));
}

ViformerParams ViformerParams::init(std::size_t embed_dim, Rng& rng) {
    ViformerParams p;
    p.wq = gaussian_matrix(embed_dim, embed_dim, kLoraInitStd, rng);
    p.wk = gaussian_matrix(embed_dim, embed_dim, kLoraInitStd, rng);
    p.wv = Matrix(embed_dim, embed_dim);
    p.wo = Matrix(embed_dim, embed_dim);
    p.mlp_in = gaussian_matrix(embed_dim, 4 * embed_dim, kLoraInitStd, rng);
    p.mlp_out = Matrix(4 * embed_dim, embed_dim);
    p.ln1_gain.assign(embed_dim, 1.0);
    p.ln1_bias.assign(embed_dim, 0.0);
    p.ln2_gain.assign(embed_dim, 1.0);
    p.ln2_bias.assign(embed_dim, 0.0);
    return p;
}

ViformerGrads ViformerGrads::zeros_like(const ViformerParams& p) {
    ViformerGrads g;
    g.wq = Matrix(p.wq.rows(), p.wq.cols());
    g.wk = Matrix(p.wk.rows(), p.wk.cols());
    g.wv = Matrix(p.wv.rows(), p.wv.cols());
    g.wo = Matrix(p.wo.rows(), p.wo.cols());
    g.mlp_in = Matrix(p.mlp_in.rows(), p.mlp_in.cols());
    g.mlp_out = Matrix(p.mlp_out.rows(), p.mlp_out.cols());
    g.ln1_gain.assign(p.ln1_gain.size(), 0.0);
    g.ln1_bias.assign(p.ln1_bias.size(), 0.0);
    g.ln2_gain.assign(p.ln2_gain.size(), 0.0);
    g.ln2_bias.assign(p.ln2_bias.size(), 0.0);
    return g;
}

Vec viformer_forward(const Vec& z, const ViformerParams& params, ViformerCache& cache) {
    const std::size_t d = params.embed_dim();
    if (z.size() != d) {
        throw std::invalid_argument("viformer input dim mismatch");
    }
    cache.z = z;
    cache.u = layer_norm(z, params.ln1_gain, params.ln1_bias, cache.xhat1, cache.inv_sigma1);

    // single-token self-attention: the softmax over one key is identically 1,
    // so the block reduces to the learned map u -> (u*wv)*wo
    Vec q = vecmat(cache.u, params.wq);
    Vec k = vecmat(cache.u, params.wk);
    cache.value = vecmat(cache.u, params.wv);
    const double score = dot(q, k) / std::sqrt(static_cast<double>(d));
    const double attn_weight = std::exp(score - score);  // softmax of a single logit
    Vec mixed = vec_scale(cache.value, attn_weight);
    cache.attn_out = vecmat(mixed, params.wo);

    cache.z_mid = vec_add(z, cache.attn_out);
    cache.u2 = layer_norm(cache.z_mid, params.ln2_gain, params.ln2_bias, cache.xhat2,
                          cache.inv_sigma2);
    cache.mlp_pre = vecmat(cache.u2, params.mlp_in);
    cache.mlp_act.resize(cache.mlp_pre.size());
    for (std::size_t i = 0; i < cache.mlp_pre.size(); ++i) {
        cache.mlp_act[i] = gelu(cache.mlp_pre[i]);
    }
    Vec mlp = vecmat(cache.mlp_act, params.mlp_out);
    Vec out = vec_add(cache.z_mid, mlp);
    check_finite(out, "viformer_forward");
    return out;
}

Vec viformer_forward(const Vec& z, const ViformerParams& params) {
    ViformerCache cache;
    return viformer_forward(z, params, cache);
}

void viformer_backward(const ViformerCache& cache, const ViformerParams& params,
                       const Vec& d_out, ViformerGrads& grads, Vec& d_z) {
    const std::size_t d = params.embed_dim();

    // out = z_mid + mlp_act*mlp_out
    Vec d_zmid = d_out;
    grads.mlp_out = add(grads.mlp_out, outer(cache.mlp_act, d_out));
    Vec d_act = matvec(params.mlp_out, d_out);
    Vec d_pre(d_act.size());
    for (std::size_t i = 0; i < d_act.size(); ++i) {
        d_pre[i] = d_act[i] * gelu_grad(cache.mlp_pre[i]);
    }
    grads.mlp_in = add(grads.mlp_in, outer(cache.u2, d_pre));
    Vec d_u2 = matvec(params.mlp_in, d_pre);

    Vec d_xhat2(d);
    for (std::size_t i = 0; i < d; ++i) {
        grads.ln2_gain[i] += d_u2[i] * cache.xhat2[i];
        grads.ln2_bias[i] += d_u2[i];
        d_xhat2[i] = d_u2[i] * params.ln2_gain[i];
    }
    Vec d_zmid_ln = layer_norm_input_grad(d_xhat2, cache.xhat2, cache.inv_sigma2);
    for (std::size_t i = 0; i < d; ++i) d_zmid[i] += d_zmid_ln[i];

    // z_mid = z + attn_out
    vec_axpy(d_z, 1.0, d_zmid);
    const Vec& d_attn = d_zmid;

    // attn_out = value*wo; the attention weight is constant 1 with zero
    // derivative w.r.t. the score, so wq/wk receive no gradient
    grads.wo = add(grads.wo, outer(cache.value, d_attn));
    Vec d_value = matvec(params.wo, d_attn);
    grads.wv = add(grads.wv, outer(cache.u, d_value));
    Vec d_u = matvec(params.wv, d_value);

    Vec d_xhat1(d);
    for (std::size_t i = 0; i < d; ++i) {
        grads.ln1_gain[i] += d_u[i] * cache.xhat1[i];
        grads.ln1_bias[i] += d_u[i];
        d_xhat1[i] = d_u[i] * params.ln1_gain[i];
    }
    Vec d_z_ln = layer_norm_input_grad(d_xhat1, cache.xhat1, cache.inv_sigma1);
    for (std::size_t i = 0; i < d; ++i) d_z[i] += d_z_ln[i];
}

Vec fuse_residual(const Vec& z, const Vec& s, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("residual ratio alpha " + std::to_string(alpha) +
                                    " outside [0, 1]");
    }
    if (z.size() != s.size()) {
        throw std::invalid_argument("fuse_residual dim mismatch");
    }
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = alpha * s[i] + (1.0 - alpha) * z[i];
    }
    return out;
}

double ModelState::temperature() const {
    return std::clamp(std::exp(log_tau), kTauMin, kTauMax);
}

ModelState ModelState::init(const EncoderConfig& config, std::size_t lora_rank, double alpha,
                            double tau, bool train_temperature, std::uint64_t seed) {
    config.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("alpha outside [0, 1]");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("temperature must be positive");
    }

    ModelState state;
    state.config = config;
    state.alpha = alpha;
    state.log_tau = std::log(tau);
    state.train_temperature = train_temperature;
    state.seed = seed;

    Rng rng_visual(Rng::derive_seed(seed, 0));
    Rng rng_text(Rng::derive_seed(seed, 1));
    Rng rng_lora(Rng::derive_seed(seed, 2));
    Rng rng_vif(Rng::derive_seed(seed, 3));

    const std::size_t d = config.embed_dim;
    if (config.architecture == EncoderArch::Linear) {
        const double std_v = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
        state.visual.w_v = gaussian_matrix(d, config.input_dim, std_v, rng_visual);
        state.adapters.push_back(
            LoraAdapter::create(d, config.input_dim, lora_rank, "visual.w_v", rng_lora));
    } else {
        const std::size_t h = config.token_dim;
        const double std_h = 1.0 / std::sqrt(static_cast<double>(h));
        state.visual.wq = gaussian_matrix(h, h, std_h, rng_visual);
        state.visual.wk = gaussian_matrix(h, h, std_h, rng_visual);
        state.visual.wv = gaussian_matrix(h, h, std_h, rng_visual);
        state.visual.wo = gaussian_matrix(h, h, std_h, rng_visual);
        state.visual.w_proj = gaussian_matrix(d, h, std_h, rng_visual);
        for (const char* target : {"visual.wq", "visual.wk", "visual.wv", "visual.wo"}) {
            state.adapters.push_back(LoraAdapter::create(h, h, lora_rank, target, rng_lora));
        }
    }
    state.w_text = gaussian_matrix(
        d, config.text_buckets, 1.0 / std::sqrt(static_cast<double>(config.text_buckets)),
        rng_text);
    state.viformer = ViformerParams::init(d, rng_vif);
    return state;
}

std::uint64_t ModelState::frozen_checksum() const {
    std::uint64_t h = kFnvOffset;
    auto mix = [&h](const Matrix& m) {
        h = fnv1a_bytes(m.data(), m.size() * sizeof(double), h);
    };
    if (config.architecture == EncoderArch::Linear) {
        mix(visual.w_v);
    } else {
        mix(visual.wq);
        mix(visual.wk);
        mix(visual.wv);
        mix(visual.wo);
        mix(visual.w_proj);
    }
    mix(w_text);
    return h;
}

std::size_t ModelState::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& adapter : adapters) n += adapter.a.size() + adapter.b.size();
    n += viformer.wq.size() + viformer.wk.size() + viformer.wv.size() + viformer.wo.size();
    n += viformer.mlp_in.size() + viformer.mlp_out.size();
    n += viformer.ln1_gain.size() + viformer.ln1_bias.size();
    n += viformer.ln2_gain.size() + viformer.ln2_bias.size();
    if (train_temperature) n += 1;
    return n;
}

std::size_t ModelState::total_parameter_count() const {
    std::size_t frozen = w_text.size();
    if (config.architecture == EncoderArch::Linear) {
        frozen += visual.w_v.size();
    } else {
        frozen += visual.wq.size() + visual.wk.size() + visual.wv.size() + visual.wo.size() +
                  visual.w_proj.size();
    }
    std::size_t n = trainable_parameter_count() + frozen;
    if (!train_temperature) n += 1;  // log_tau exists either way
    return n;
}

void install_aligned_base(ModelState& state, const Matrix& image_directions,
                          const Matrix& text_features, double noise_std, Rng& rng) {
    if (state.config.architecture != EncoderArch::Linear) {
        throw std::invalid_argument("install_aligned_base supports the linear architecture only");
    }
    const std::size_t categories = image_directions.rows();
    const std::size_t d = state.config.embed_dim;
    if (categories == 0 || text_features.rows() != categories) {
        throw std::invalid_argument("install_aligned_base: category row count mismatch");
    }
    if (categories > d) {
        throw std::invalid_argument("install_aligned_base needs embed_dim >= category count");
    }
    if (image_directions.cols() != state.config.input_dim ||
        text_features.cols() != state.config.text_buckets) {
        throw std::invalid_argument("install_aligned_base: feature dim mismatch");
    }

    // one orthonormal code per category, via Gram-Schmidt on a seeded basis
    Matrix codes(categories, d);
    for (std::size_t c = 0; c < categories; ++c) {
        Vec v = rng.gaussian_vec(d, 0.0, 1.0);
        for (std::size_t prev = 0; prev < c; ++prev) {
            const double proj = dot(v, codes.row(prev));
            for (std::size_t i = 0; i < d; ++i) v[i] -= proj * codes(prev, i);
        }
        codes.set_row(c, l2_normalize(v));
    }

    // rank-C maps: category-c inputs land on code c, plus a small random part
    Matrix w_v(d, state.config.input_dim);
    Matrix w_t(d, state.config.text_buckets);
    for (std::size_t c = 0; c < categories; ++c) {
        const Vec dir = image_directions.row_vec(c);
        const Vec feat = text_features.row_vec(c);
        const double dir_scale = 1.0 / dot(dir, dir);
        const double feat_scale = 1.0 / dot(feat, feat);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < w_v.cols(); ++j) {
                w_v(i, j) += codes(c, i) * dir[j] * dir_scale;
            }
            for (std::size_t j = 0; j < w_t.cols(); ++j) {
                w_t(i, j) += codes(c, i) * feat[j] * feat_scale;
            }
        }
    }
    for (std::size_t i = 0; i < w_v.size(); ++i) w_v.data()[i] += rng.gaussian(0.0, noise_std);
    for (std::size_t i = 0; i < w_t.size(); ++i) w_t.data()[i] += rng.gaussian(0.0, noise_std);
    state.visual.w_v = std::move(w_v);
    state.w_text = std::move(w_t);
}

ComposedWeights compose_weights(const ModelState& state) {
    ComposedWeights w;
    if (state.config.architecture == EncoderArch::Linear) {
        w.w_v = lora_effective_weight(state.visual.w_v, state.adapters[0]);
    } else {
        w.wq = lora_effective_weight(state.visual.wq, state.adapters[0]);
        w.wk = lora_effective_weight(state.visual.wk, state.adapters[1]);
        w.wv = lora_effective_weight(state.visual.wv, state.adapters[2]);
        w.wo = lora_effective_weight(state.visual.wo, state.adapters[3]);
    }
    return w;
}

Vec encode_image(const Vec& raw, const ModelState& state, const ComposedWeights& weights,
                 EncodeCache& cache) {
    if (raw.size() != state.config.input_dim) {
        throw std::invalid_argument("encode_image: input dim " + std::to_string(raw.size()) +
                                    " does not match config input_dim " +
                                    std::to_string(state.config.input_dim));
    }
    cache.x = raw;
    if (state.config.architecture == EncoderArch::Linear) {
        cache.z = matvec(weights.w_v, raw);
    } else {
        const std::size_t t = state.config.token_count;
        const std::size_t h = state.config.token_dim;
        cache.tokens = Matrix(t, h, raw);
        cache.q = matmul(cache.tokens, weights.wq);
        cache.k = matmul(cache.tokens, weights.wk);
        cache.v = matmul(cache.tokens, weights.wv);
        Matrix scores = scale(matmul(cache.q, transpose(cache.k)),
                              1.0 / std::sqrt(static_cast<double>(h)));
        cache.attn_probs = softmax_rows(scores);
        cache.attn_mix = matmul(cache.attn_probs, cache.v);
        Matrix out_tokens = matmul(cache.attn_mix, weights.wo);
        Vec pooled(h, 0.0);
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < h; ++j) pooled[j] += out_tokens(i, j);
        }
        for (double& x : pooled) x /= static_cast<double>(t);
        cache.z = matvec(state.visual.w_proj, pooled);
    }
    Vec s = viformer_forward(cache.z, state.viformer, cache.viformer);
    return fuse_residual(cache.z, s, state.alpha);
}

Vec encode_image(const Vec& raw, const ModelState& state) {
    EncodeCache cache;
    return encode_image(raw, state, compose_weights(state), cache);
}

Vec text_features(const std::string& caption, std::size_t buckets) {
    Vec counts(buckets, 0.0);
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        std::uint64_t h = fnv1a_bytes(token.data(), token.size(), kFnvOffset);
        counts[h % buckets] += 1.0;
        token.clear();
    };
    for (char c : caption) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            token.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            flush();
        }
    }
    flush();
    return counts;
}

Vec encode_text(const std::string& caption, const ModelState& state) {
    if (caption.empty()) {
        throw std::invalid_argument("encode_text: empty caption");
    }
    Vec feats = text_features(caption, state.config.text_buckets);
    bool any = false;
    for (double v : feats) {
        if (v != 0.0) {
            any = true;
            break;
        }
    }
    if (!any) {
        throw std::invalid_argument("encode_text: caption has no tokens: '" + caption + "'");
    }
    return matvec(state.w_text, feats);
}

ModelGrads ModelGrads::zeros_like(const ModelState& state) {
    ModelGrads g;
    for (const auto& adapter : state.adapters) {
        g.adapters.emplace_back(Matrix(adapter.a.rows(), adapter.a.cols()),
                                Matrix(adapter.b.rows(), adapter.b.cols()));
    }
    g.viformer = ViformerGrads::zeros_like(state.viformer);
    g.log_tau = 0.0;
    return g;
}

void encode_image_backward(const EncodeCache& cache, const ModelState& state,
                           const ComposedWeights& weights, const Vec& d_fused,
                           ModelGrads& grads) {
    const double alpha = state.alpha;
    Vec d_s = vec_scale(d_fused, alpha);
    Vec d_z = vec_scale(d_fused, 1.0 - alpha);
    viformer_backward(cache.viformer, state.viformer, d_s, grads.viformer, d_z);

    if (state.config.architecture == EncoderArch::Linear) {
        Matrix d_weff = outer(d_z, cache.x);
        accumulate_lora_grads(state.adapters[0], d_weff, grads.adapters[0].first,
                              grads.adapters[0].second);
        return;
    }

    const std::size_t t = state.config.token_count;
    const std::size_t h = state.config.token_dim;
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));

    // z = w_proj * mean-pooled output tokens
    Vec d_pooled = vecmat(d_z, state.visual.w_proj);
    Matrix d_out_tokens(t, h);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < h; ++j) {
            d_out_tokens(i, j) = d_pooled[j] / static_cast<double>(t);
        }
    }

    Matrix d_wo = matmul(transpose(cache.attn_mix), d_out_tokens);
    Matrix d_mix = matmul(d_out_tokens, transpose(weights.wo));
    Matrix d_probs = matmul(d_mix, transpose(cache.v));
    Matrix d_v = matmul(transpose(cache.attn_probs), d_mix);

    // softmax rows backward
    Matrix d_scores(t, t);
    for (std::size_t i = 0; i < t; ++i) {
        double row_dot = 0.0;
        for (std::size_t j = 0; j < t; ++j) row_dot += d_probs(i, j) * cache.attn_probs(i, j);
        for (std::size_t j = 0; j < t; ++j) {
            d_scores(i, j) = cache.attn_probs(i, j) * (d_probs(i, j) - row_dot);
        }
    }
    Matrix d_q = scale(matmul(d_scores, cache.k), inv_sqrt_h);
    Matrix d_k = scale(matmul(transpose(d_scores), cache.q), inv_sqrt_h);

    Matrix d_wq = matmul(transpose(cache.tokens), d_q);
    Matrix d_wk = matmul(transpose(cache.tokens), d_k);
    Matrix d_wv = matmul(transpose(cache.tokens), d_v);

    accumulate_lora_grads(state.adapters[0], d_wq, grads.adapters[0].first,
                          grads.adapters[0].second);
    accumulate_lora_grads(state.adapters[1], d_wk, grads.adapters[1].first,
                          grads.adapters[1].second);
    accumulate_lora_grads(state.adapters[2], d_wv, grads.adapters[2].first,
                          grads.adapters[2].second);
    accumulate_lora_grads(state.adapters[3], d_wo, grads.adapters[3].first,
                          grads.adapters[3].second);
}

namespace {

template <typename Vif>
void collect_viformer_params(Vif& vif, std::vector<ParamRef>& out) {
    out.push_back({"viformer.wq", vif.wq.data(), vif.wq.size()});
    out.push_back({"viformer.wk", vif.wk.data(), vif.wk.size()});
    out.push_back({"viformer.wv", vif.wv.data(), vif.wv.size()});
    out.push_back({"viformer.wo", vif.wo.data(), vif.wo.size()});
    out.push_back({"viformer.mlp_in", vif.mlp_in.data(), vif.mlp_in.size()});
    out.push_back({"viformer.mlp_out", vif.mlp_out.data(), vif.mlp_out.size()});
    out.push_back({"viformer.ln1_gain", vif.ln1_gain.data(), vif.ln1_gain.size()});
    out.push_back({"viformer.ln1_bias", vif.ln1_bias.data(), vif.ln1_bias.size()});
    out.push_back({"viformer.ln2_gain", vif.ln2_gain.data(), vif.ln2_gain.size()});
    out.push_back({"viformer.ln2_bias", vif.ln2_bias.data(), vif.ln2_bias.size()});
}

}  // namespace

std::vector<ParamRef> trainable_params(ModelState& state) {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < state.adapters.size(); ++i) {
        auto& ad = state.adapters[i];
        out.push_back({"lora[" + std::to_string(i) + "].A", ad.a.data(), ad.a.size()});
        out.push_back({"lora[" + std::to_string(i) + "].B", ad.b.data(), ad.b.size()});
    }
    collect_viformer_params(state.viformer, out);
    if (state.train_temperature) {
        out.push_back({"log_tau", &state.log_tau, 1});
    }
    return out;
}

std::vector<ParamRef> trainable_params(const ModelState& state, ModelGrads& grads) {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < grads.adapters.size(); ++i) {
        auto& [da, db] = grads.adapters[i];
        out.push_back({"lora[" + std::to_string(i) + "].A", da.data(), da.size()});
        out.push_back({"lora[" + std::to_string(i) + "].B", db.data(), db.size()});
    }
    collect_viformer_params(grads.viformer, out);
    if (state.train_temperature) {
        out.push_back({"log_tau", &grads.log_tau, 1});
    }
    return out;
}

Vec flatten_trainable(const ModelState& state) {
    Vec out;
    auto refs = trainable_params(const_cast<ModelState&>(state));
    for (const auto& ref : refs) {
        out.insert(out.end(), ref.data, ref.data + ref.size);
    }
    return out;
}

void unflatten_trainable(ModelState& state, std::span<const double> values) {
    auto refs = trainable_params(state);
    std::size_t pos = 0;
    for (auto& ref : refs) {
        if (pos + ref.size > values.size()) {
            throw std::invalid_argument("unflatten_trainable: too few values");
        }
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(pos),
                  values.begin() + static_cast<std::ptrdiff_t>(pos + ref.size), ref.data);
        pos += ref.size;
    }
    if (pos != values.size()) {
        throw std::invalid_argument("unflatten_trainable: too many values");
    }
}

// ---- checkpoint I/O ---------------------------------------------------------

namespace {

struct NamedArray {
    std::string name;
    double* data;
    std::size_t rows, cols;  // cols == 0 encodes a flat vector/scalar
};

std::vector<NamedArray> checkpoint_arrays(ModelState& state) {
    std::vector<NamedArray> out;
    auto mat = [&out](const char* name, Matrix& m) {
        out.push_back({name, m.data(), m.rows(), m.cols()});
    };
    if (state.config.architecture == EncoderArch::Linear) {
        mat("visual.w_v", state.visual.w_v);
    } else {
        mat("visual.wq", state.visual.wq);
        mat("visual.wk", state.visual.wk);
        mat("visual.wv", state.visual.wv);
        mat("visual.wo", state.visual.wo);
        mat("visual.w_proj", state.visual.w_proj);
    }
    mat("text.w", state.w_text);
    for (std::size_t i = 0; i < state.adapters.size(); ++i) {
        auto& ad = state.adapters[i];
        std::string prefix = "lora[" + std::to_string(i) + "]";
        out.push_back({prefix + ".A", ad.a.data(), ad.a.rows(), ad.a.cols()});
        out.push_back({prefix + ".B", ad.b.data(), ad.b.rows(), ad.b.cols()});
    }
    auto& vf = state.viformer;
    mat("viformer.wq", vf.wq);
    mat("viformer.wk", vf.wk);
    mat("viformer.wv", vf.wv);
    mat("viformer.wo", vf.wo);
    mat("viformer.mlp_in", vf.mlp_in);
    mat("viformer.mlp_out", vf.mlp_out);
    out.push_back({"viformer.ln1_gain", vf.ln1_gain.data(), vf.ln1_gain.size(), 0});
    out.push_back({"viformer.ln1_bias", vf.ln1_bias.data(), vf.ln1_bias.size(), 0});
    out.push_back({"viformer.ln2_gain", vf.ln2_gain.data(), vf.ln2_gain.size(), 0});
    out.push_back({"viformer.ln2_bias", vf.ln2_bias.data(), vf.ln2_bias.size(), 0});
    out.push_back({"log_tau", &state.log_tau, 1, 0});
    return out;
}

std::size_t array_len(const NamedArray& a) {
    return a.cols == 0 ? a.rows : a.rows * a.cols;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    auto& mutable_state = const_cast<ModelState&>(state);
    auto arrays = checkpoint_arrays(mutable_state);

    nlohmann::json header;
    header["format"] = "ovt-checkpoint-v1";
    header["seed"] = state.seed;
    header["alpha"] = state.alpha;
    header["train_temperature"] = state.train_temperature;
    header["lora_rank"] = state.adapters.empty() ? 0 : state.adapters[0].rank;
    header["config"] = {
        {"input_dim", state.config.input_dim},
        {"embed_dim", state.config.embed_dim},
        {"architecture", to_string(state.config.architecture)},
        {"token_count", state.config.token_count},
        {"token_dim", state.config.token_dim},
        {"text_buckets", state.config.text_buckets},
    };
    nlohmann::json params = nlohmann::json::array();
    for (const auto& a : arrays) {
        params.push_back({{"name", a.name}, {"shape", {a.rows, a.cols}}});
    }
    header["params"] = params;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    }
    out << header.dump() << '\n';
    for (const auto& a : arrays) {
        // little-endian float64, matching the in-memory layout on supported targets
        out.write(reinterpret_cast<const char*>(a.data),
                  static_cast<std::streamsize>(array_len(a) * sizeof(double)));
    }
    if (!out) {
        throw std::runtime_error("failed writing checkpoint: " + path);
    }
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint file: " + path);
    }
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw std::runtime_error("checkpoint missing header line: " + path);
    }
    nlohmann::json header = nlohmann::json::parse(header_line);
    if (header.value("format", "") != std::string("ovt-checkpoint-v1")) {
        throw std::runtime_error("unrecognized checkpoint format in " + path);
    }

    EncoderConfig config;
    const auto& jc = header.at("config");
    config.input_dim = jc.at("input_dim").get<std::size_t>();
    config.embed_dim = jc.at("embed_dim").get<std::size_t>();
    config.architecture = encoder_arch_from_string(jc.at("architecture").get<std::string>());
    config.token_count = jc.at("token_count").get<std::size_t>();
    config.token_dim = jc.at("token_dim").get<std::size_t>();
    config.text_buckets = jc.at("text_buckets").get<std::size_t>();

    ModelState state = ModelState::init(config, header.at("lora_rank").get<std::size_t>(),
                                        header.at("alpha").get<double>(), 1.0,
                                        header.at("train_temperature").get<bool>(),
                                        header.at("seed").get<std::uint64_t>());

    auto arrays = checkpoint_arrays(state);
    const auto& params = header.at("params");
    if (params.size() != arrays.size()) {
        throw std::runtime_error("checkpoint parameter list mismatch in " + path);
    }
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const auto& meta = params[i];
        if (meta.at("name").get<std::string>() != arrays[i].name ||
            meta.at("shape")[0].get<std::size_t>() != arrays[i].rows ||
            meta.at("shape")[1].get<std::size_t>() != arrays[i].cols) {
            throw std::runtime_error("checkpoint parameter '" + arrays[i].name +
                                     "' has unexpected name or shape in " + path);
        }
        in.read(reinterpret_cast<char*>(arrays[i].data),
                static_cast<std::streamsize>(array_len(arrays[i]) * sizeof(double)));
        if (!in) {
            throw std::runtime_error("checkpoint truncated while reading '" + arrays[i].name +
                                     "' from " + path);
        }
    }
    return state;
}

}  // namespace ovt
