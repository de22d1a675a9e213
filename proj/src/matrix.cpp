#include "otmatch/matrix.hpp"

#include <cmath>

namespace otmatch {

Vector matvec(const DenseMatrix& m, const Vector& x) {
    if (x.size() != m.cols) throw DimensionError("matvec: size mismatch");
    Vector y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* r = m.values.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * x[j];
        y[i] = s;
    }
    return y;
}

Vector matvec_transposed(const DenseMatrix& m, const Vector& x) {
    if (x.size() != m.rows) throw DimensionError("matvec_transposed: size mismatch");
    Vector y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.values.data() + i * m.cols;
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += r[j] * xi;
    }
    return y;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const DenseMatrix& m) { return all_finite(m.values); }

void check_finite(const Vector& v, const std::string& what) {
    if (!all_finite(v)) throw NumericError("non-finite values in " + what);
}

}  // namespace otmatch
