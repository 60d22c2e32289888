#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ltvforge {

// Dense row-major matrix of doubles. The only tensor type the substrate
// needs; vectors are n x 1 or 1 x n matrices.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// y += x (same shape)
void add_inplace(Matrix& y, const Matrix& x);
// y += row broadcast over all rows of y (bias add); bias is 1 x cols
void add_row_inplace(Matrix& y, const Matrix& bias);
// elementwise product
Matrix hadamard(const Matrix& a, const Matrix& b);
// column sums as a 1 x cols matrix
Matrix col_sums(const Matrix& a);
// horizontal concatenation of blocks with equal row counts
Matrix hcat(const std::vector<const Matrix*>& blocks);

}  // namespace ltvforge
