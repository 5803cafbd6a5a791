#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mipic {

/// Dense row-major matrix of doubles. Value type; copies are deep.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix scalar(double v) { return Matrix(1, 1, v); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    /// Value of a 1x1 matrix.
    double item() const;

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;
    bool all_finite() const noexcept;
    void fill(double v);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_str(std::size_t rows, std::size_t cols);

// Plain (non-differentiable) kernels shared by the autograd ops, teachers and evaluators.
namespace la {

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
void axpy(double alpha, const Matrix& x, Matrix& y);  // y += alpha·x
double frobenius_sq(const Matrix& a);
double sum(const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);
Matrix col_mean(const Matrix& a);  // 1 x cols
Matrix center_columns(const Matrix& a);
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count);
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> rows);
Matrix l2_normalize_rows(const Matrix& a);

}  // namespace la
}  // namespace mipic
