#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ovt {

using Vec = std::vector<double>;

/// Dense row-major matrix of 64-bit floats. Every public operation in this
/// header leaves its result fully finite or throws.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);            // zero-filled
    Matrix(std::size_t rows, std::size_t cols, Vec data);  // validates size and finiteness

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const Vec& values() const { return data_; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }
    Vec row_vec(std::size_t i) const;
    void set_row(std::size_t i, std::span<const double> v);

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

// ---- matrix ops -----------------------------------------------------------

/// Standard product with left-to-right summation over the inner index.
/// Throws on a.cols() != b.rows() and on an empty inner dimension.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);

/// y = m * x (column-vector convention).
Vec matvec(const Matrix& m, const Vec& x);
/// y = x * m (row-vector convention; x has m.rows() entries).
Vec vecmat(const Vec& x, const Matrix& m);
/// u v^T as a |u| x |v| matrix.
Matrix outer(const Vec& u, const Vec& v);

/// Row-wise softmax with per-row max subtraction; each output row sums to 1.
Matrix softmax_rows(const Matrix& m);

// ---- vector ops -----------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// Unit-norm copy of v. Throws when ||v|| <= 1e-12.
Vec l2_normalize(std::span<const double> v);

/// Cosine of the angle between a and b, clamped to [-1, 1].
/// Throws when either vector is (near-)zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// 1 - cosine_similarity, in [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

Vec vec_add(const Vec& a, const Vec& b);
Vec vec_sub(const Vec& a, const Vec& b);
Vec vec_scale(const Vec& v, double s);
void vec_axpy(Vec& y, double a, const Vec& x);  // y += a*x

/// Throws std::runtime_error naming `where` if any entry is NaN/Inf.
void check_finite(std::span<const double> v, const char* where);

}  // namespace ovt
