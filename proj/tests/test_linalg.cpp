#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "ovt/gradcheck.hpp"
#include "ovt/matrix.hpp"
#include "ovt/rng.hpp"

using ovt::Matrix;
using ovt::Vec;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, ovt::Rng& rng) {
    return Matrix(r, c, rng.gaussian_vec(r * c, 0.0, 1.0));
}

}  // namespace

TEST_CASE("matmul identity") {
    ovt::Rng rng(7);
    Matrix x = random_matrix(2, 2, rng);
    Matrix p = ovt::matmul(Matrix::identity(2), x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.data()[i] == x.data()[i]);
}

TEST_CASE("matmul column times row matches triple-loop oracle") {
    Matrix a = Matrix::from_rows({{2.0}, {0.0}});
    Matrix b = Matrix::from_rows({{1.0, 1.0}});
    Matrix p = ovt::matmul(a, b);
    Matrix expected = oracle::matmul(a, b);
    REQUIRE(p.rows() == 2);
    REQUIRE(p.cols() == 2);
    CHECK(p(0, 0) == 2.0);
    CHECK(p(0, 1) == 2.0);
    CHECK(p(1, 0) == 0.0);
    CHECK(p(1, 1) == 0.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.data()[i] == expected.data()[i]);
}

TEST_CASE("matmul rejects shape mismatch and empty inner dimension") {
    Matrix a(1, 0);
    Matrix b(0, 1);
    CHECK_THROWS_AS(ovt::matmul(a, b), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ovt::matmul(Matrix(2, 3), Matrix(2, 2)), doctest::Contains("2x3"),
                         std::invalid_argument);
}

TEST_CASE("matmul associativity on random small matrices") {
    ovt::Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n1 = 1 + rng.uniform_index(4);
        std::size_t n2 = 1 + rng.uniform_index(4);
        std::size_t n3 = 1 + rng.uniform_index(4);
        std::size_t n4 = 1 + rng.uniform_index(4);
        Matrix a = random_matrix(n1, n2, rng);
        Matrix b = random_matrix(n2, n3, rng);
        Matrix c = random_matrix(n3, n4, rng);
        Matrix left = ovt::matmul(ovt::matmul(a, b), c);
        Matrix right = ovt::matmul(a, ovt::matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            CHECK(left.data()[i] == doctest::Approx(right.data()[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("l2_normalize") {
    Vec v = ovt::l2_normalize(Vec{3.0, 4.0});
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(std::abs(ovt::norm(v) - 1.0) < 1e-12);

    Vec unit{1.0, 0.0, 0.0};
    Vec same = ovt::l2_normalize(unit);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(same[i] - unit[i]) < 1e-15);

    CHECK_THROWS_AS(ovt::l2_normalize(Vec{0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("cosine similarity hand cases") {
    CHECK(ovt::cosine_similarity(Vec{1, 0}, Vec{0, 1}) == 0.0);
    CHECK(ovt::cosine_similarity(Vec{1, 0}, Vec{1, 0}) == 1.0);
    CHECK(ovt::cosine_similarity(Vec{1, 0}, Vec{1, 1}) ==
          doctest::Approx(0.7071067811865475).epsilon(1e-15));
    CHECK_THROWS_AS(ovt::cosine_similarity(Vec{0, 0}, Vec{1, 0}), std::invalid_argument);
}

TEST_CASE("cosine distance hand cases and symmetry") {
    Vec a{0.3, -1.2, 0.7};
    CHECK(ovt::cosine_distance(a, a) == 0.0);
    CHECK(ovt::cosine_distance(Vec{1, 0}, Vec{0, 1}) == 1.0);
    CHECK(ovt::cosine_distance(Vec{1, 0}, Vec{-1, 0}) == 2.0);

    ovt::Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Vec x = rng.gaussian_vec(5, 0.0, 1.0);
        Vec y = rng.gaussian_vec(5, 0.0, 1.0);
        CHECK(ovt::cosine_distance(x, y) == ovt::cosine_distance(y, x));
        CHECK(ovt::cosine_distance(x, x) == 0.0);
    }
}

TEST_CASE("softmax_rows") {
    Matrix two = ovt::softmax_rows(Matrix::from_rows({{0.0, 0.0}}));
    CHECK(two(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(two(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

    Matrix one = ovt::softmax_rows(Matrix::from_rows({{4.2}}));
    CHECK(one(0, 0) == 1.0);

    Matrix big = ovt::softmax_rows(Matrix::from_rows({{1000.0, 1000.0}}));
    CHECK(big(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(big(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax_rows row sums and shift invariance") {
    ovt::Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = random_matrix(3, 6, rng);
        Matrix s = ovt::softmax_rows(m);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < s.cols(); ++j) sum += s(i, j);
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
        Matrix shifted = m;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double c = rng.gaussian(0.0, 10.0);
            for (std::size_t j = 0; j < m.cols(); ++j) shifted(i, j) += c;
        }
        Matrix s2 = ovt::softmax_rows(shifted);
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(std::abs(s.data()[i] - s2.data()[i]) < 1e-12);
        }
    }
}

TEST_CASE("finite_difference_check on quadratic") {
    auto f = [](std::span<const double> p) { return p[0] * p[0]; };
    Vec params{3.0};
    Vec grad{6.0};
    auto report = ovt::finite_difference_check(f, params, grad, 1e-5);
    CHECK(report.max_relative_error < 1e-6);
    CHECK(report.per_parameter.size() == 1);
    CHECK(report.per_parameter[0].numeric == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite_difference_check on constant function") {
    auto f = [](std::span<const double>) { return 1.5; };
    Vec params{0.2, -0.4, 1.0};
    Vec grad{0.0, 0.0, 0.0};
    auto report = ovt::finite_difference_check(f, params, grad, 1e-5);
    CHECK(report.max_relative_error < 1e-8);
}

TEST_CASE("finite_difference_check rejects bad step and non-finite f") {
    auto f = [](std::span<const double> p) { return p[0]; };
    Vec params{1.0};
    Vec grad{1.0};
    CHECK_THROWS_AS(ovt::finite_difference_check(f, params, grad, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(ovt::finite_difference_check(f, params, grad, 1e-8), std::invalid_argument);

    auto bad = [](std::span<const double> p) { return std::log(p[0] - 10.0); };
    CHECK_THROWS_AS(ovt::finite_difference_check(bad, params, grad, 1e-5), std::runtime_error);
}

TEST_CASE("finite_difference_check flags a wrong gradient") {
    auto f = [](std::span<const double> p) { return p[0] * p[0] + 2.0 * p[1]; };
    Vec params{1.0, 1.0};
    Vec wrong{2.0, 1.0};  // true gradient is (2, 2)
    auto report = ovt::finite_difference_check(f, params, wrong, 1e-5);
    CHECK(report.max_relative_error > 0.4);
}
