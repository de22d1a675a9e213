#pragma once

#include <span>
#include <vector>

#include "otmatch/matrix.hpp"

namespace otmatch::ot {

struct OTConfig {
    double epsilon = 0.01;
    int max_iterations = 20000;
    double marginal_tolerance = 1e-9;
};

struct ScaleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MarginalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& msg, double residual)
        : std::runtime_error(msg), residual(residual) {}
    double residual;
};
struct SupportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OTResult {
    double distance = 0.0;
    DenseMatrix plan;  // m x n
};

/// Exact Kantorovich OT on small instances (m, n <= 16) via the
/// transportation simplex. Serves as the independent oracle for the O(K)
/// Dirac shortcut and for Sinkhorn.
OTResult exact_ot(const Vector& mu, const Vector& nu, const DenseMatrix& cost);

struct SinkhornResult {
    double distance = 0.0;
    DenseMatrix plan;
    int iterations = 0;
    double marginal_residual = 0.0;
};

/// Log-domain Sinkhorn for the entropic problem <C,T> - eps H(T) on U(mu,nu).
/// Zero-mass atoms are trimmed up front and restored as zero rows/columns.
SinkhornResult sinkhorn(const Vector& mu, const Vector& nu, const DenseMatrix& cost,
                        const OTConfig& cfg);

/// Row-constrained closed form: T_ij = (1/m) softmax_j(-C_i/eps).
DenseMatrix closed_form_row_plan(const DenseMatrix& cost, double eps);

/// <C,T> - eps H(T) with H(T) = sum (1 - log T_ij) T_ij and 0 log 0 := 0.
double entropic_objective(const DenseMatrix& cost, const DenseMatrix& plan, double eps);

/// W(delta_k, nu) for a metric cost: sum_{i != k} C_ik nu_i, O(K).
double fast_dirac_ot(std::size_t k, const Vector& nu, const DenseMatrix& cost);

/// Generalized KL for positive measures: sum P log(P/Q) - sum P + sum Q.
double generalized_kl(const Vector& p, const Vector& q);

/// Minimizer of x -> W(delta_x, (1/m) sum delta_{s_i}) under squared l2 cost;
/// the sample mean.
double wasserstein_to_dirac_argmin(std::span<const double> samples);

}  // namespace otmatch::ot
