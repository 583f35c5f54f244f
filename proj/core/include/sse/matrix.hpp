#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace sse {

/// Dense row-major matrix of 64-bit reals. The only storage type used for
/// model parameters, activations and gradients; bias vectors are 1 x n.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }
    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void set_zero();
    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out = a * b (shapes checked; throws std::invalid_argument with a shape
/// diagnostic on mismatch).
Matrix matmul(const Matrix& a, const Matrix& b);

/// out (+)= a * b. `accumulate` keeps the existing contents of out.
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

/// out (+)= a * b^T. Used for d(input) = d(out) * W^T with row-major W,
/// and for logits against a shared (transposed) embedding.
void matmul_nt_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// out (+)= a^T * b. Used for dW = X^T * dZ.
void matmul_tn_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// Row-wise softmax with max-subtraction; every output row is nonnegative
/// and sums to 1 within 1e-12 regardless of input magnitudes.
Matrix softmax_rows(const Matrix& m);

/// Adds a 1 x n bias row to every row of m.
void add_row_vector(Matrix& m, const Matrix& bias);

}  // namespace sse
