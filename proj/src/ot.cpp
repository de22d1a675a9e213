#include "otmatch/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace otmatch::ot {

namespace {

constexpr std::size_t kOracleScale = 16;

void check_marginals_match(const Vector& mu, const Vector& nu) {
    const double sm = std::accumulate(mu.begin(), mu.end(), 0.0);
    const double sn = std::accumulate(nu.begin(), nu.end(), 0.0);
    if (std::abs(sm - sn) > 1e-9)
        throw MarginalError("exact_ot: marginal sums differ");
}

struct BasicCell {
    std::size_t i, j;
    double value;
};

// Potentials u_i, v_j with u_i + v_j = C_ij on the basis spanning tree.
void solve_potentials(const std::vector<BasicCell>& basis, std::size_t m, std::size_t n,
                      const DenseMatrix& cost, Vector& u, Vector& v) {
    const std::size_t nodes = m + n;  // rows 0..m-1, cols m..m+n-1
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t b = 0; b < basis.size(); ++b) {
        adj[basis[b].i].push_back(b);
        adj[m + basis[b].j].push_back(b);
    }
    u.assign(m, 0.0);
    v.assign(n, 0.0);
    std::vector<bool> done(nodes, false);
    std::vector<std::size_t> stack = {0};
    done[0] = true;
    while (!stack.empty()) {
        const std::size_t node = stack.back();
        stack.pop_back();
        for (std::size_t b : adj[node]) {
            const std::size_t other = node < m ? m + basis[b].j : basis[b].i;
            if (done[other]) continue;
            const double c = cost.at(basis[b].i, basis[b].j);
            if (other >= m)
                v[other - m] = c - u[basis[b].i];
            else
                u[other] = c - v[basis[b].j];
            done[other] = true;
            stack.push_back(other);
        }
    }
}

// Unique path between row node ei and col node (m + ej) in the basis tree,
// returned as basis indices in path order.
std::vector<std::size_t> tree_path(const std::vector<BasicCell>& basis, std::size_t m,
                                   std::size_t n, std::size_t ei, std::size_t ej) {
    const std::size_t nodes = m + n;
    std::vector<std::vector<std::size_t>> adj(nodes);
    for (std::size_t b = 0; b < basis.size(); ++b) {
        adj[basis[b].i].push_back(b);
        adj[m + basis[b].j].push_back(b);
    }
    std::vector<long long> parent_edge(nodes, -1);
    std::vector<long long> parent_node(nodes, -1);
    std::vector<bool> seen(nodes, false);
    std::vector<std::size_t> queue = {ei};
    seen[ei] = true;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const std::size_t node = queue[qi];
        if (node == m + ej) break;
        for (std::size_t b : adj[node]) {
            const std::size_t other = node < m ? m + basis[b].j : basis[b].i;
            if (seen[other]) continue;
            seen[other] = true;
            parent_edge[other] = static_cast<long long>(b);
            parent_node[other] = static_cast<long long>(node);
            queue.push_back(other);
        }
    }
    std::vector<std::size_t> path;
    long long node = static_cast<long long>(m + ej);
    while (node != static_cast<long long>(ei)) {
        path.push_back(static_cast<std::size_t>(parent_edge[node]));
        node = parent_node[node];
    }
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

OTResult exact_ot(const Vector& mu, const Vector& nu, const DenseMatrix& cost) {
    const std::size_t m = mu.size(), n = nu.size();
    if (m == 0 || n == 0) throw std::invalid_argument("exact_ot: empty marginal");
    if (m > kOracleScale || n > kOracleScale)
        throw ScaleError("exact_ot: instance exceeds oracle scale (16)");
    if (cost.rows != m || cost.cols != n) throw DimensionError("exact_ot: cost shape mismatch");
    check_marginals_match(mu, nu);

    // Northwest-corner initial basic feasible solution, m+n-1 basics with
    // degenerate zero cells kept in the basis.
    Vector a = mu, b = nu;
    std::vector<BasicCell> basis;
    basis.reserve(m + n - 1);
    std::size_t i = 0, j = 0;
    while (true) {
        const double v = std::min(a[i], b[j]);
        basis.push_back({i, j, std::max(v, 0.0)});
        a[i] -= v;
        b[j] -= v;
        if (i == m - 1 && j == n - 1) break;
        if (i == m - 1)
            ++j;
        else if (j == n - 1)
            ++i;
        else if (a[i] <= b[j])
            ++i;
        else
            ++j;
    }

    Vector u, v;
    const int max_pivots = 100000;
    for (int pivot = 0; pivot < max_pivots; ++pivot) {
        solve_potentials(basis, m, n, cost, u, v);

        std::vector<bool> is_basic(m * n, false);
        for (const BasicCell& c : basis) is_basic[c.i * n + c.j] = true;

        // Entering cell: most negative reduced cost; after many pivots fall
        // back to Bland's rule to guarantee termination under degeneracy.
        const bool bland = pivot > 2000;
        double best = -1e-10;
        long long ei = -1, ej = -1;
        for (std::size_t r = 0; r < m && (!bland || ei < 0); ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                if (is_basic[r * n + c]) continue;
                const double rc = cost.at(r, c) - u[r] - v[c];
                if (rc < best) {
                    best = rc;
                    ei = static_cast<long long>(r);
                    ej = static_cast<long long>(c);
                    if (bland) break;
                }
            }
        }
        if (ei < 0) break;  // optimal

        const std::vector<std::size_t> path =
            tree_path(basis, m, n, static_cast<std::size_t>(ei), static_cast<std::size_t>(ej));
        // Entering gets +theta; path edges alternate -,+,-,... starting at the
        // edge leaving row ei.
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = 0;
        for (std::size_t p = 0; p < path.size(); p += 2) {
            const BasicCell& c = basis[path[p]];
            if (c.value < theta ||
                (c.value == theta &&
                 std::make_pair(c.i, c.j) < std::make_pair(basis[leave].i, basis[leave].j))) {
                theta = c.value;
                leave = path[p];
            }
        }
        for (std::size_t p = 0; p < path.size(); ++p) {
            basis[path[p]].value += (p % 2 == 0) ? -theta : theta;
            if (basis[path[p]].value < 0.0) basis[path[p]].value = 0.0;
        }
        basis[leave] = {static_cast<std::size_t>(ei), static_cast<std::size_t>(ej), theta};
    }

    OTResult res;
    res.plan = DenseMatrix(m, n);
    for (const BasicCell& c : basis) res.plan.at(c.i, c.j) += c.value;
    res.distance = 0.0;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) res.distance += cost.at(r, c) * res.plan.at(r, c);
    return res;
}

namespace {

double logsumexp(const Vector& xs) {
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

SinkhornResult sinkhorn(const Vector& mu, const Vector& nu, const DenseMatrix& cost,
                        const OTConfig& cfg) {
    if (cfg.epsilon <= 0.0) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
    const std::size_t m0 = mu.size(), n0 = nu.size();
    if (cost.rows != m0 || cost.cols != n0)
        throw DimensionError("sinkhorn: cost shape mismatch");
    check_marginals_match(mu, nu);

    // trim zero-mass atoms; restored as zero rows/columns afterwards
    std::vector<std::size_t> ri, ci;
    for (std::size_t i = 0; i < m0; ++i)
        if (mu[i] > 0.0) ri.push_back(i);
    for (std::size_t j = 0; j < n0; ++j)
        if (nu[j] > 0.0) ci.push_back(j);
    const std::size_t m = ri.size(), n = ci.size();
    if (m == 0 || n == 0) throw std::invalid_argument("sinkhorn: empty support");

    DenseMatrix c(m, n);
    Vector a(m), b(n);
    for (std::size_t i = 0; i < m; ++i) a[i] = mu[ri[i]];
    for (std::size_t j = 0; j < n; ++j) b[j] = nu[ci[j]];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c.at(i, j) = cost.at(ri[i], ci[j]);

    const double eps = cfg.epsilon;
    Vector f(m, 0.0), g(n, 0.0);
    Vector scratch(std::max(m, n));
    DenseMatrix t(m, n);
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
        for (std::size_t i = 0; i < m; ++i) {
            scratch.resize(n);
            for (std::size_t j = 0; j < n; ++j) scratch[j] = (g[j] - c.at(i, j)) / eps;
            f[i] = eps * std::log(a[i]) - eps * logsumexp(scratch);
        }
        for (std::size_t j = 0; j < n; ++j) {
            scratch.resize(m);
            for (std::size_t i = 0; i < m; ++i) scratch[i] = (f[i] - c.at(i, j)) / eps;
            g[j] = eps * std::log(b[j]) - eps * logsumexp(scratch);
        }
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                t.at(i, j) = std::exp((f[i] + g[j] - c.at(i, j)) / eps);
        residual = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < n; ++j) rs += t.at(i, j);
            residual = std::max(residual, std::abs(rs - a[i]));
        }
        for (std::size_t j = 0; j < n; ++j) {
            double cs = 0.0;
            for (std::size_t i = 0; i < m; ++i) cs += t.at(i, j);
            residual = std::max(residual, std::abs(cs - b[j]));
        }
        if (residual < cfg.marginal_tolerance) {
            ++it;
            break;
        }
    }
    if (residual >= cfg.marginal_tolerance)
        throw ConvergenceError("sinkhorn: no convergence within max_iterations", residual);

    SinkhornResult res;
    res.plan = DenseMatrix(m0, n0);
    res.distance = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            res.plan.at(ri[i], ci[j]) = t.at(i, j);
            res.distance += cost.at(ri[i], ci[j]) * t.at(i, j);
        }
    res.iterations = it;
    res.marginal_residual = residual;
    return res;
}

DenseMatrix closed_form_row_plan(const DenseMatrix& cost, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("closed_form_row_plan: eps must be > 0");
    const double inv_m = 1.0 / static_cast<double>(cost.rows);
    DenseMatrix t(cost.rows, cost.cols);
    for (std::size_t i = 0; i < cost.rows; ++i) {
        double cmin = cost.at(i, 0);
        for (std::size_t j = 1; j < cost.cols; ++j) cmin = std::min(cmin, cost.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < cost.cols; ++j) {
            t.at(i, j) = std::exp(-(cost.at(i, j) - cmin) / eps);
            z += t.at(i, j);
        }
        for (std::size_t j = 0; j < cost.cols; ++j) t.at(i, j) *= inv_m / z;
    }
    return t;
}

double entropic_objective(const DenseMatrix& cost, const DenseMatrix& plan, double eps) {
    if (!cost.same_shape(plan)) throw DimensionError("entropic_objective: shape mismatch");
    double obj = 0.0;
    for (std::size_t i = 0; i < plan.values.size(); ++i) {
        const double t = plan.values[i];
        obj += cost.values[i] * t;
        if (t > 0.0) obj -= eps * (1.0 - std::log(t)) * t;
    }
    return obj;
}

double fast_dirac_ot(std::size_t k, const Vector& nu, const DenseMatrix& cost) {
    if (cost.rows != cost.cols || cost.rows != nu.size())
        throw DimensionError("fast_dirac_ot: shape mismatch");
    if (k >= nu.size()) throw std::out_of_range("fast_dirac_ot: class index out of range");
    double d = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i)
        if (i != k) d += cost.at(i, k) * nu[i];
    return d;
}

double generalized_kl(const Vector& p, const Vector& q) {
    if (p.size() != q.size()) throw DimensionError("generalized_kl: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0)
            throw std::invalid_argument("generalized_kl: negative entry");
        if (p[i] > 0.0) {
            if (q[i] == 0.0)
                throw SupportError("generalized_kl: P positive outside support of Q");
            kl += p[i] * std::log(p[i] / q[i]);
        }
        kl += q[i] - p[i];
    }
    return kl;
}

double wasserstein_to_dirac_argmin(std::span<const double> samples) {
    if (samples.empty())
        throw std::invalid_argument("wasserstein_to_dirac_argmin: empty sample set");
    double s = 0.0;
    for (double x : samples) s += x;
    return s / static_cast<double>(samples.size());
}

}  // namespace otmatch::ot
