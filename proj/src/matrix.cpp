#include "dap/matrix.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dap/errors.hpp"

namespace dap {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
    }
}

void require_finite(const Matrix& m, const char* op) {
    if (!m.is_finite()) {
        throw ShapeError(std::string(op) + ": produced a non-finite value");
    }
}

// Largest double strictly below 1.
constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not equal rows*cols = " + std::to_string(rows_ * cols_));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("Matrix: ragged initializer rows");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::column(std::vector<double> values) {
    std::size_t n = values.size();
    return Matrix(n, 1, std::move(values));
}

bool Matrix::is_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix Matrix::row_as_column(std::size_t r) const {
    Matrix out(cols_, 1);
    const double* src = data_.data() + r * cols_;
    for (std::size_t i = 0; i < cols_; ++i) out.data()[i] = src[i];
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a) + " times " +
                         shape_str(b));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.cols(), p = b.cols();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = ad + i * n;
        double* orow = od + i * p;
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = arow[k];
            const double* brow = bd + k * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    require_finite(out, "matmul");
    return out;
}

Matrix matmul_transposed_a(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_transposed_a: row counts differ, " + shape_str(a) + " vs " +
                         shape_str(b));
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t n = a.cols(), p = b.cols();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = ad + k * n;
        const double* brow = bd + k * p;
        for (std::size_t i = 0; i < n; ++i) {
            const double aki = arow[i];
            double* orow = od + i * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += aki * brow[j];
        }
    }
    require_finite(out, "matmul_transposed_a");
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix outer(const Matrix& a, const Matrix& b) {
    if (a.cols() != 1 || b.cols() != 1) {
        throw ShapeError("outer: expects column vectors, got " + shape_str(a) + " and " +
                         shape_str(b));
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double ai = a(i, 0);
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = ai * b(j, 0);
    }
    require_finite(out, "outer");
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_in_place");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

Matrix vconcat(const Matrix& top, const Matrix& bottom) {
    if (top.cols() != 1 || bottom.cols() != 1) {
        throw ShapeError("vconcat: expects column vectors");
    }
    Matrix out(top.rows() + bottom.rows(), 1);
    for (std::size_t i = 0; i < top.rows(); ++i) out(i, 0) = top(i, 0);
    for (std::size_t i = 0; i < bottom.rows(); ++i) out(top.rows() + i, 0) = bottom(i, 0);
    return out;
}

double sigmoid_scalar(double x) {
    double r;
    if (x >= 0.0) {
        r = 1.0 / (1.0 + std::exp(-x)); // exp argument <= 0, never overflows
    } else {
        double e = std::exp(x);
        r = e / (1.0 + e);
    }
    if (r >= 1.0) return kBelowOne;
    if (r <= 0.0) return std::numeric_limits<double>::min();
    return r;
}

double tanh_scalar(double x) {
    double r = std::tanh(x);
    if (r >= 1.0) return kBelowOne;
    if (r <= -1.0) return -kBelowOne;
    return r;
}

Matrix sigmoid(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = sigmoid_scalar(v);
    return out;
}

Matrix tanh(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = tanh_scalar(v);
    return out;
}

Matrix softmax(const Matrix& x) {
    if (x.cols() != 1 || x.rows() == 0) {
        throw ShapeError("softmax: expects a nonempty column vector, got " + shape_str(x));
    }
    double mx = x(0, 0);
    for (double v : x.data()) mx = std::max(mx, v);
    Matrix out = x;
    double sum = 0.0;
    for (double& v : out.data()) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : out.data()) v /= sum;
    return out;
}

Matrix init_weights(std::size_t rows, std::size_t cols, InitScheme scheme, SeededRng& rng) {
    if (rows < 1 || cols < 1) {
        throw ShapeError("init_weights: rows and cols must be >= 1");
    }
    Matrix out(rows, cols);
    switch (scheme) {
    case InitScheme::Zeros:
        break;
    case InitScheme::UniformScaled: {
        double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (double& v : out.data()) v = rng.uniform(-bound, bound);
        break;
    }
    }
    return out;
}

} // namespace dap
