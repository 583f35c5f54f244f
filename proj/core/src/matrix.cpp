#include "sse/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sse {
namespace {

[[noreturn]] void throw_shape(const char* op, const Matrix& a, const Matrix& b) {
    std::ostringstream oss;
    oss << op << ": incompatible shapes " << a.rows() << "x" << a.cols() << " and " << b.rows()
        << "x" << b.cols();
    throw std::invalid_argument(oss.str());
}

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols()) throw std::invalid_argument("from_rows: ragged rows");
        std::copy(row.begin(), row.end(), m.row(r++));
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void matmul_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    if (a.cols() != b.rows()) throw_shape("matmul", a, b);
    if (out.rows() != a.rows() || out.cols() != b.cols())
        out = Matrix(a.rows(), b.cols());
    else if (!accumulate)
        out.set_zero();
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_into(a, b, out);
    return out;
}

void matmul_nt_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    if (a.cols() != b.cols()) throw_shape("matmul_nt", a, b);
    if (out.rows() != a.rows() || out.cols() != b.rows())
        out = Matrix(a.rows(), b.rows());
    else if (!accumulate)
        out.set_zero();
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            orow[j] += acc;
        }
    }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_nt_into(a, b, out);
    return out;
}

void matmul_tn_into(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    if (a.rows() != b.rows()) throw_shape("matmul_tn", a, b);
    if (out.rows() != a.cols() || out.cols() != b.cols())
        out = Matrix(a.cols(), b.cols());
    else if (!accumulate)
        out.set_zero();
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out.row(p);
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_tn_into(a, b, out);
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* in = m.row(i);
        double* o = out.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m.cols(); ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < m.cols(); ++j) o[j] *= inv;
    }
    return out;
}

void add_row_vector(Matrix& m, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) throw_shape("add_row_vector", m, bias);
    const double* b = bias.row(0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) r[j] += b[j];
    }
}

}  // namespace sse
