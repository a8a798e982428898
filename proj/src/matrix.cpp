#include "ovt/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ovt {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

void check_finite(std::span<const double> v, const char* where) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::runtime_error(std::string("non-finite value in ") + where);
        }
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, Vec data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(rows_, cols_));
    }
    check_finite(data_, "Matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    Vec data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("ragged initializer rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Vec Matrix::row_vec(std::size_t i) const {
    auto r = row(i);
    return Vec(r.begin(), r.end());
}

void Matrix::set_row(std::size_t i, std::span<const double> v) {
    if (v.size() != cols_) {
        throw std::invalid_argument("set_row length mismatch");
    }
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + shape_str(a.rows(), a.cols()) +
                                    " * " + shape_str(b.rows(), b.cols()));
    }
    if (a.cols() == 0) {
        throw std::invalid_argument("matmul: empty inner dimension (" +
                                    shape_str(a.rows(), a.cols()) + " * " +
                                    shape_str(b.rows(), b.cols()) + ")");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    check_finite(out.values(), "matmul");
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("add shape mismatch: " + shape_str(a.rows(), a.cols()) +
                                    " vs " + shape_str(b.rows(), b.cols()));
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    check_finite(out.values(), "add");
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("sub shape mismatch: " + shape_str(a.rows(), a.cols()) +
                                    " vs " + shape_str(b.rows(), b.cols()));
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    check_finite(out.values(), "sub");
    return out;
}

Matrix scale(const Matrix& m, double s) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
    check_finite(out.values(), "scale");
    return out;
}

Vec matvec(const Matrix& m, const Vec& x) {
    if (m.cols() != x.size()) {
        throw std::invalid_argument("matvec shape mismatch: " + shape_str(m.rows(), m.cols()) +
                                    " * vector of length " + std::to_string(x.size()));
    }
    Vec y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m.cols(); ++k) {
            acc += m(i, k) * x[k];
        }
        y[i] = acc;
    }
    check_finite(y, "matvec");
    return y;
}

Vec vecmat(const Vec& x, const Matrix& m) {
    if (m.rows() != x.size()) {
        throw std::invalid_argument("vecmat shape mismatch: vector of length " +
                                    std::to_string(x.size()) + " * " +
                                    shape_str(m.rows(), m.cols()));
    }
    Vec y(m.cols(), 0.0);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m.rows(); ++k) {
            acc += x[k] * m(k, j);
        }
        y[j] = acc;
    }
    check_finite(y, "vecmat");
    return y;
}

Matrix outer(const Vec& u, const Vec& v) {
    Matrix out(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            out(i, j) = u[i] * v[j];
        }
    }
    check_finite(out.values(), "outer");
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    check_finite(m.values(), "softmax_rows input");
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = std::exp(m(i, j) - mx);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

Vec l2_normalize(std::span<const double> v) {
    const double n = norm(v);
    if (!(n > 1e-12)) {
        throw std::invalid_argument("l2_normalize: vector norm " + std::to_string(n) +
                                    " below 1e-12");
    }
    Vec out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (!(na > 1e-12) || !(nb > 1e-12)) {
        throw std::invalid_argument("cosine_similarity: zero-norm input");
    }
    // identical inputs must give exactly 1 (the ratio below can land one ulp off)
    if (a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin())) {
        return 1.0;
    }
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    return 1.0 - cosine_similarity(a, b);
}

Vec vec_add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_add length mismatch");
    Vec out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Vec vec_sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_sub length mismatch");
    Vec out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Vec vec_scale(const Vec& v, double s) {
    Vec out = v;
    for (double& x : out) x *= s;
    return out;
}

void vec_axpy(Vec& y, double a, const Vec& x) {
    if (y.size() != x.size()) throw std::invalid_argument("vec_axpy length mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace ovt
