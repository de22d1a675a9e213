#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace otmatch {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    static DenseMatrix zeros(std::size_t r, std::size_t c) { return DenseMatrix(r, c); }

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
};

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// y = M x  (M is rows x cols, x has cols entries)
Vector matvec(const DenseMatrix& m, const Vector& x);
/// y = M^T x  (x has rows entries, result has cols entries)
Vector matvec_transposed(const DenseMatrix& m, const Vector& x);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);

bool all_finite(const Vector& v);
bool all_finite(const DenseMatrix& m);

void check_finite(const Vector& v, const std::string& what);

}  // namespace otmatch
