#pragma once

#include <cstddef>
#include <vector>

namespace minikv {

using Vector = std::vector<float>;

// Dense row-major 2-D array, 32-bit floats.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    float* row(std::size_t r) { return data.data() + r * cols; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }

    bool empty() const { return rows == 0 || cols == 0; }
};

// Standard product with deterministic left-to-right accumulation per dot product.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Extract the given rows (in the given order) into a new matrix.
Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& indices);

// Append one row to the bottom of m. Throws on width mismatch.
void append_row(Matrix& m, const Vector& row);

float dot(const float* a, const float* b, std::size_t n);

// Row vector times matrix: out[j] = sum_k v[k] * m[k][j].
Vector vecmat(const Vector& v, const Matrix& m);

// Max-subtracted softmax. Throws on empty input.
Vector softmax_row(const Vector& x);

// In-place variant over a raw span.
void softmax_inplace(float* x, std::size_t n);

}  // namespace minikv
