#include "ltvforge/matrix.hpp"

#include <cmath>
#include <cstring>

#include "ltvforge/errors.hpp"

namespace ltvforge {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols_) throw ConfigError("ragged initializer for Matrix");
        std::size_t c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ConfigError("matmul shape mismatch");
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    // ikj order keeps the inner loop contiguous in both b and c.
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.data() + i * m;
        const double* ai = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ConfigError("matmul_tn shape mismatch");
    Matrix c(a.cols(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        const double* bi = b.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ConfigError("matmul_nt shape mismatch");
    Matrix c(a.rows(), b.rows());
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
    return c;
}

void add_inplace(Matrix& y, const Matrix& x) {
    if (y.rows() != x.rows() || y.cols() != x.cols()) throw ConfigError("add_inplace shape mismatch");
    double* yd = y.data();
    const double* xd = x.data();
    for (std::size_t i = 0; i < y.size(); ++i) yd[i] += xd[i];
}

void add_row_inplace(Matrix& y, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != y.cols()) throw ConfigError("bias shape mismatch");
    for (std::size_t r = 0; r < y.rows(); ++r) {
        double* row = y.data() + r * y.cols();
        const double* b = bias.data();
        for (std::size_t c = 0; c < y.cols(); ++c) row[c] += b[c];
    }
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("hadamard shape mismatch");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
    return c;
}

Matrix col_sums(const Matrix& a) {
    Matrix s(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* row = a.data() + r * a.cols();
        for (std::size_t c = 0; c < a.cols(); ++c) s.data()[c] += row[c];
    }
    return s;
}

Matrix hcat(const std::vector<const Matrix*>& blocks) {
    if (blocks.empty()) return {};
    const std::size_t rows = blocks.front()->rows();
    std::size_t cols = 0;
    for (const Matrix* b : blocks) {
        if (b->rows() != rows) throw ConfigError("hcat row count mismatch");
        cols += b->cols();
    }
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double* dst = out.data() + r * cols;
        for (const Matrix* b : blocks) {
            std::memcpy(dst, b->data() + r * b->cols(), b->cols() * sizeof(double));
            dst += b->cols();
        }
    }
    return out;
}

}  // namespace ltvforge
