#pragma once

#include <string>
#include <vector>

#include "otmatch/matrix.hpp"
#include "otmatch/nn.hpp"

namespace otmatch::costs {

/// Inter-class cost with EMA momentum state. Symmetry and a zero diagonal are
/// maintained exactly by construction.
struct CostMatrix {
    DenseMatrix c;  // K x K
    double momentum = 0.999;
    bool metric_valid = true;

    std::size_t num_classes() const { return c.rows; }
};

struct DegenerateHeadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Discrete metric 1 - I.
CostMatrix init_discrete(std::size_t num_classes, double momentum = 0.999);

/// Unit-normalized head columns v_k = w_k / ||w_k||.
std::vector<Vector> head_directions(const DenseMatrix& head);

/// C(i,j) <- m C(i,j) + (1-m)(1 - <v_i, v_j>).
void ema_update_cost(CostMatrix& cost, const DenseMatrix& head);

/// U(x) = (1 - p_k)<w_k,w_k> - sum_{k' != k} p_{k'} <w_{k'}, w_k>.
double gradient_score_u(const Vector& features, const DenseMatrix& head, std::size_t k,
                        double eps = 1.0);

/// Expected classification cost sum_{k'} C(k,k') p_{k'}.
double expected_cost(const Vector& features, const DenseMatrix& head, const CostMatrix& cost,
                     std::size_t k, double eps = 1.0);

struct MetricViolation {
    enum class Kind { Diagonal, Symmetry, Triangle };
    Kind kind;
    std::size_t i, j, k;  // k used only for triangle violations
    double amount;
};

struct MetricReport {
    bool valid = true;
    std::vector<MetricViolation> violations;
};

/// Checks zero diagonal, symmetry, and the triangle inequality within tol;
/// report-only, also updates cost.metric_valid.
MetricReport validate_metric(CostMatrix& cost, double tol);

/// Agglomerative dendrogram. Leaves are nodes 0..K-1; internal nodes follow.
struct DendrogramNode {
    int left = -1;
    int right = -1;
    double height = 0.0;
    std::vector<int> members;
};

struct Dendrogram {
    std::vector<DendrogramNode> nodes;
    int root = -1;
    std::vector<double> merge_heights;  // in merge order
};

/// Average-linkage clustering over the cost matrix as a dissimilarity; ties
/// merge the lexicographically smallest (i, j) pair of representatives.
Dendrogram hierarchical_cluster(const CostMatrix& cost);

std::string dendrogram_to_json(const Dendrogram& d, const std::vector<std::string>& labels);

void write_cost_csv(const CostMatrix& cost, const std::vector<std::string>& labels,
                    const std::string& path);

}  // namespace otmatch::costs
