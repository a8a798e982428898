#include "ovt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ovt {

namespace {

// log softmax diagonal term of row i: s_ii - logsumexp(row)
double log_softmax_diag(const Matrix& s, std::size_t i) {
    double mx = s(i, 0);
    for (std::size_t j = 1; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) sum += std::exp(s(i, j) - mx);
    return s(i, i) - mx - std::log(sum);
}

}  // namespace

ItcResult itc_loss(const ItcBatch& batch) {
    const Matrix& zi = batch.image_embeddings;
    const Matrix& zt = batch.text_embeddings;
    const double tau = batch.temperature;
    const std::size_t n = zi.rows();
    if (n == 0) {
        throw std::invalid_argument("itc_loss: empty batch");
    }
    if (!zi.same_shape(zt)) {
        throw std::invalid_argument("itc_loss: image/text shape mismatch");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("itc_loss: temperature must be positive, got " +
                                    std::to_string(tau));
    }
    const std::size_t d = zi.cols();

    Matrix u(n, d), v(n, d);
    Vec norm_i(n), norm_t(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec ui = l2_normalize(zi.row(i));
        Vec vi = l2_normalize(zt.row(i));
        norm_i[i] = norm(zi.row(i));
        norm_t[i] = norm(zt.row(i));
        u.set_row(i, ui);
        v.set_row(i, vi);
    }

    Matrix sim = matmul(u, transpose(v));        // cosine similarities
    Matrix scaled = scale(sim, 1.0 / tau);
    Matrix scaled_t = transpose(scaled);

    double loss_i2t = 0.0, loss_t2i = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        loss_i2t -= log_softmax_diag(scaled, i);
        loss_t2i -= log_softmax_diag(scaled_t, i);
    }
    loss_i2t /= static_cast<double>(n);
    loss_t2i /= static_cast<double>(n);

    Matrix p = softmax_rows(scaled);    // image -> text
    Matrix q = softmax_rows(scaled_t);  // text -> image

    // dL/d(scaled sim) = (P + Q^T - 2I) / (2N)
    Matrix d_scaled(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            d_scaled(i, j) = (p(i, j) + q(j, i) - (i == j ? 2.0 : 0.0)) /
                             (2.0 * static_cast<double>(n));
        }
    }

    double d_tau = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            d_tau += d_scaled(i, j) * (-sim(i, j) / (tau * tau));
        }
    }

    Matrix d_sim = scale(d_scaled, 1.0 / tau);
    Matrix d_u = matmul(d_sim, v);
    Matrix d_v = matmul(transpose(d_sim), u);

    // back through row normalization: dz = (du - (du.u) u) / ||z||
    ItcResult result;
    result.d_image = Matrix(n, d);
    result.d_text = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double proj_i = dot(d_u.row(i), u.row(i));
        const double proj_t = dot(d_v.row(i), v.row(i));
        for (std::size_t c = 0; c < d; ++c) {
            result.d_image(i, c) = (d_u(i, c) - proj_i * u(i, c)) / norm_i[i];
            result.d_text(i, c) = (d_v(i, c) - proj_t * v(i, c)) / norm_t[i];
        }
    }
    result.loss = 0.5 * (loss_i2t + loss_t2i);
    result.d_temperature = d_tau;
    return result;
}

double vc_pair_loss(const Vec& z, const Vec& anchor, double margin, MarginMode mode) {
    const double dist = cosine_distance(z, anchor);
    const double shifted = mode == MarginMode::Additive ? dist + margin : dist - margin;
    return std::max(shifted, 0.0);
}

VcResult vc_loss(const VcBatch& batch) {
    if (batch.outliers.size() != batch.anchors.size()) {
        throw std::invalid_argument("vc_loss: outlier/anchor count mismatch");
    }
    VcResult result;
    result.d_outliers.reserve(batch.outliers.size());
    for (std::size_t i = 0; i < batch.outliers.size(); ++i) {
        const Vec& z = batch.outliers[i];
        const Vec& c = batch.anchors[i];
        const double value = vc_pair_loss(z, c, batch.margin, batch.mode);
        result.loss += value;

        Vec grad(z.size(), 0.0);
        if (value > 0.0) {
            // d(1 - cos)/dz = -(c_hat - cos * z_hat) / ||z||
            const double nz = norm(z);
            const Vec z_hat = l2_normalize(z);
            const Vec c_hat = l2_normalize(c);
            const double cos = cosine_similarity(z, c);
            for (std::size_t k = 0; k < z.size(); ++k) {
                grad[k] = -(c_hat[k] - cos * z_hat[k]) / nz;
            }
        }
        result.d_outliers.push_back(std::move(grad));
    }
    return result;
}

double total_loss(double itc, double vc, double lambda) {
    if (!(lambda >= 0.0)) {
        throw std::invalid_argument("total_loss: lambda must be >= 0");
    }
    return itc + lambda * vc;
}

}  // namespace ovt
