#include "doctest.h"

#include <cmath>
#include <vector>
#include <stdexcept>

#include "sse/matrix.hpp"
#include "sse/rng.hpp"

using sse::Matrix;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, sse::RngStream& rng,
                     double zero_fraction = 0.0) {
    Matrix m(rows, cols);
    for (double& v : m.flat())
        v = rng.next_double() < zero_fraction ? 0.0 : rng.next_gaussian(0.0, 1.0);
    return m;
}

// Independent triple-loop reference, deliberately written in the most naive
// (i,j,k) order so it shares no structure with the library kernels.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a.flat()[i] - b.flat()[i]));
    return worst;
}

}  // namespace

TEST_CASE("matmul matches a naive triple-loop oracle") {
    sse::RngStream rng(101);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t m = 1 + rng.next_below(9);
        const std::size_t k = 1 + rng.next_below(9);
        const std::size_t n = 1 + rng.next_below(9);
        // Half the trials plant exact zeros to exercise the zero-skip path.
        const double zf = (trial % 2 == 0) ? 0.4 : 0.0;
        const Matrix a = random_matrix(m, k, rng, zf);
        const Matrix b = random_matrix(k, n, rng);
        CHECK(max_abs_diff(sse::matmul(a, b), naive_matmul(a, b)) < 1e-13);
    }
}

TEST_CASE("matmul_nt and matmul_tn match transposed oracles") {
    sse::RngStream rng(202);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t m = 1 + rng.next_below(7);
        const std::size_t k = 1 + rng.next_below(7);
        const std::size_t n = 1 + rng.next_below(7);
        const Matrix a = random_matrix(m, k, rng);
        const Matrix b = random_matrix(n, k, rng);  // a * b^T
        CHECK(max_abs_diff(sse::matmul_nt(a, b), naive_matmul(a, transpose(b))) < 1e-13);
        const Matrix c = random_matrix(k, m, rng);  // c^T * d
        const Matrix d = random_matrix(k, n, rng);
        CHECK(max_abs_diff(sse::matmul_tn(c, d), naive_matmul(transpose(c), d)) < 1e-13);
    }
}

TEST_CASE("matmul accumulate adds onto existing contents") {
    sse::RngStream rng(303);
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(4, 2, rng);
    Matrix out = random_matrix(3, 2, rng);
    const Matrix before = out;
    sse::matmul_into(a, b, out, /*accumulate=*/true);
    const Matrix product = naive_matmul(a, b);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.flat()[i] == doctest::Approx(before.flat()[i] + product.flat()[i]).epsilon(1e-12));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(sse::matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
    Matrix out(2, 2);
    CHECK_THROWS_AS(sse::matmul_into(Matrix(2, 3), Matrix(4, 3), out), std::invalid_argument);
    // A wrong-shaped destination is resized, not rejected.
    sse::matmul_into(Matrix(2, 3), Matrix(3, 5), out);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 5);
}

TEST_CASE("identity is a matmul unit") {
    sse::RngStream rng(404);
    const Matrix a = random_matrix(4, 4, rng);
    CHECK(max_abs_diff(sse::matmul(a, Matrix::identity(4)), a) == 0.0);
    CHECK(max_abs_diff(sse::matmul(Matrix::identity(4), a), a) == 0.0);
}

TEST_CASE("softmax rows are distributions and invariant to row shifts") {
    sse::RngStream rng(505);
    Matrix logits = random_matrix(6, 5, rng);
    // Large magnitudes must not overflow thanks to max subtraction.
    logits(0, 0) = 900.0;
    logits(1, 2) = -900.0;
    const Matrix p = sse::softmax_rows(logits);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) {
            CHECK(p(r, c) >= 0.0);
            sum += p(r, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    Matrix shifted = logits;
    for (double& v : shifted.flat()) v += 2.0;
    CHECK(max_abs_diff(sse::softmax_rows(shifted), p) <= 1e-15);
}

TEST_CASE("softmax of equal logits is uniform") {
    const Matrix p = sse::softmax_rows(Matrix(2, 4, 3.25));
    for (double v : p.flat()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("add_row_vector adds the bias to every row") {
    Matrix m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    const Matrix bias = Matrix::from_rows({{10.0, 20.0}});
    sse::add_row_vector(m, bias);
    CHECK(m(0, 0) == 11.0);
    CHECK(m(0, 1) == 22.0);
    CHECK(m(1, 0) == 13.0);
    CHECK(m(1, 1) == 24.0);
    CHECK_THROWS_AS(sse::add_row_vector(m, Matrix(1, 3)), std::invalid_argument);
}
