#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dap/rng.hpp"

namespace dap {

// Dense row-major matrix of 64-bit reals. Column vectors are the 1-column
// case. Values are expected to stay finite; operations that can overflow
// check their result and throw rather than let NaN/Inf escape.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix column(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool is_finite() const;

    // Row r as a column vector (used to feed T x F windows frame by frame).
    Matrix row_as_column(std::size_t r) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_transposed_a(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
// Outer product of two column vectors: a * b^T.
Matrix outer(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);
// Stack two column vectors on top of each other.
Matrix vconcat(const Matrix& top, const Matrix& bottom);

// Element-wise activations. Outputs are clamped to stay strictly inside the
// open interval ((0,1) for sigmoid, (-1,1) for tanh) even where the true
// value rounds to the boundary in double precision.
Matrix sigmoid(const Matrix& x);
Matrix tanh(const Matrix& x);
double sigmoid_scalar(double x);
double tanh_scalar(double x);

// Softmax of a column vector, computed with max subtraction.
Matrix softmax(const Matrix& x);

enum class InitScheme {
    Zeros,
    // Uniform in +/- sqrt(6 / (fan_in + fan_out)) with fan_in = cols,
    // fan_out = rows.
    UniformScaled,
};

Matrix init_weights(std::size_t rows, std::size_t cols, InitScheme scheme, SeededRng& rng);

} // namespace dap
