#include "minikv/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minikv {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions do not match");
    }
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const float* arow = a.row(i);
        float* orow = out.row(i);
        for (std::size_t j = 0; j < b.cols; ++j) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += arow[k] * b.at(k, j);
            }
            orow[j] = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            out.at(j, i) = m.at(i, j);
        }
    }
    return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& indices) {
    Matrix out(indices.size(), m.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows) {
            throw std::out_of_range("gather_rows: index out of range");
        }
        std::copy_n(m.row(indices[i]), m.cols, out.row(i));
    }
    return out;
}

void append_row(Matrix& m, const Vector& row) {
    if (m.rows == 0 && m.cols == 0) {
        m.cols = row.size();
    }
    if (row.size() != m.cols) {
        throw std::invalid_argument("append_row: width mismatch");
    }
    m.data.insert(m.data.end(), row.begin(), row.end());
    ++m.rows;
}

float dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t k = 0; k < n; ++k) {
        acc += a[k] * b[k];
    }
    return acc;
}

Vector vecmat(const Vector& v, const Matrix& m) {
    if (v.size() != m.rows) {
        throw std::invalid_argument("vecmat: dimension mismatch");
    }
    Vector out(m.cols, 0.0f);
    for (std::size_t j = 0; j < m.cols; ++j) {
        float acc = 0.0f;
        for (std::size_t k = 0; k < m.rows; ++k) {
            acc += v[k] * m.at(k, j);
        }
        out[j] = acc;
    }
    return out;
}

void softmax_inplace(float* x, std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("softmax: empty input");
    }
    float m = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        m = std::max(m, x[i]);
    }
    float sum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - m);
        sum += x[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        x[i] /= sum;
    }
}

Vector softmax_row(const Vector& x) {
    Vector out = x;
    softmax_inplace(out.data(), out.size());
    return out;
}

}  // namespace minikv
