#include "orthomix/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "orthomix/error.hpp"
#include "orthomix/kernels.hpp"

namespace orthomix {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("matrix data has " + std::to_string(data_.size()) + " entries, expected " +
                             std::to_string(rows_ * cols_));
    }
    if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
        throw Error("matrix contains non-finite entries");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    kernels::gemm(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
    return out;
}

Matrix modified_gram_schmidt(const Matrix& r) {
    if (!r.square()) throw DimensionError("modified_gram_schmidt: matrix must be square");
    const std::size_t n = r.rows();
    const double threshold = 1e-8 * std::sqrt(static_cast<double>(n));
    Matrix q = r;
    for (std::size_t i = 0; i < n; ++i) {
        auto v = q.row(i);
        for (std::size_t j = 0; j < i; ++j) {
            const auto u = q.row(j);
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += v[c] * u[c];
            for (std::size_t c = 0; c < n; ++c) v[c] -= dot * u[c];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm >= threshold)) {
            throw DegenerateError("modified_gram_schmidt: row " + std::to_string(i) +
                                  " is linearly dependent on previous rows");
        }
        for (double& x : v) x /= norm;
    }
    return q;
}

double orthogonality_defect(const Matrix& q) {
    if (!q.square()) throw DimensionError("orthogonality_defect: matrix must be square");
    const std::size_t n = q.rows();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += q(i, c) * q(j, c);
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

}  // namespace orthomix
