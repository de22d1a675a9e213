#pragma once

// Shared test helpers: random instance generators and the finite-difference
// gradient oracle. Test-only; independent of the gradient code it checks.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "otmatch/nn.hpp"

namespace testutil {

using otmatch::DenseMatrix;
using otmatch::Vector;

inline Vector random_prob_vec(std::size_t k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    Vector v(k);
    double s = 0.0;
    for (double& x : v) s += (x = unif(rng));
    for (double& x : v) x /= s;
    return v;
}

// Metric cost from pairwise Euclidean distances of random embedded points.
inline DenseMatrix random_metric_cost(std::size_t k, std::mt19937_64& rng,
                                      std::size_t embed_dim = 3) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Vector> pts(k, Vector(embed_dim));
    for (auto& p : pts)
        for (double& x : p) x = gauss(rng);
    DenseMatrix c(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double d = 0.0;
            for (std::size_t e = 0; e < embed_dim; ++e) {
                const double t = pts[i][e] - pts[j][e];
                d += t * t;
            }
            c.at(i, j) = std::sqrt(d);
        }
    return c;
}

inline DenseMatrix random_unit_head(std::size_t feature_dim, std::size_t k,
                                    std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix head(feature_dim, k);
    for (std::size_t c = 0; c < k; ++c) {
        double norm = 0.0;
        Vector col(feature_dim);
        for (double& v : col) norm += (v = gauss(rng)) * v;
        norm = std::sqrt(norm);
        for (std::size_t f = 0; f < feature_dim; ++f) head.at(f, c) = col[f] / norm;
    }
    return head;
}

// Pointers to every scalar parameter, in a fixed order matching flatten_grads.
inline std::vector<double*> param_ptrs(otmatch::nn::ModelParams& p) {
    std::vector<double*> out;
    for (auto& layer : p.extractor) {
        for (double& v : layer.weight.values) out.push_back(&v);
        for (double& v : layer.bias) out.push_back(&v);
    }
    for (double& v : p.head.values) out.push_back(&v);
    return out;
}

inline std::vector<double> flatten_grads(const otmatch::nn::ParamGrads& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
        out.insert(out.end(), g.weight[l].values.begin(), g.weight[l].values.end());
        out.insert(out.end(), g.bias[l].begin(), g.bias[l].end());
    }
    out.insert(out.end(), g.head.values.begin(), g.head.values.end());
    return out;
}

// Central finite differences of a scalar loss over every model parameter.
inline std::vector<double> fd_gradient(otmatch::nn::ModelParams& params,
                                       const std::function<double()>& loss, double h = 1e-6) {
    std::vector<double*> ptrs = param_ptrs(params);
    std::vector<double> grad(ptrs.size());
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
        const double orig = *ptrs[i];
        *ptrs[i] = orig + h;
        const double up = loss();
        *ptrs[i] = orig - h;
        const double down = loss();
        *ptrs[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Relative error with an absolute floor for near-zero gradients.
inline double grad_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace testutil
