#include "otmatch/cost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace otmatch::costs {

CostMatrix init_discrete(std::size_t num_classes, double momentum) {
    if (num_classes < 2) throw std::invalid_argument("init_discrete: K must be >= 2");
    CostMatrix cost;
    cost.c = DenseMatrix(num_classes, num_classes);
    for (std::size_t i = 0; i < num_classes; ++i)
        for (std::size_t j = 0; j < num_classes; ++j) cost.c.at(i, j) = i == j ? 0.0 : 1.0;
    cost.momentum = momentum;
    cost.metric_valid = true;
    return cost;
}

std::vector<Vector> head_directions(const DenseMatrix& head) {
    std::vector<Vector> dirs(head.cols, Vector(head.rows, 0.0));
    for (std::size_t k = 0; k < head.cols; ++k) {
        double norm = 0.0;
        for (std::size_t f = 0; f < head.rows; ++f) {
            dirs[k][f] = head.at(f, k);
            norm += dirs[k][f] * dirs[k][f];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-300)
            throw DegenerateHeadError("head_directions: zero-norm head column");
        for (double& v : dirs[k]) v /= norm;
    }
    return dirs;
}

void ema_update_cost(CostMatrix& cost, const DenseMatrix& head) {
    const std::size_t k = cost.num_classes();
    if (head.cols != k) throw DimensionError("ema_update_cost: head/cost class mismatch");
    const std::vector<Vector> dirs = head_directions(head);
    const double m = cost.momentum;
    for (std::size_t i = 0; i < k; ++i) {
        cost.c.at(i, i) = 0.0;
        for (std::size_t j = i + 1; j < k; ++j) {
            const double target = 1.0 - dot(dirs[i], dirs[j]);
            const double v = m * cost.c.at(i, j) + (1.0 - m) * target;
            cost.c.at(i, j) = v;
            cost.c.at(j, i) = v;
        }
    }
}

double gradient_score_u(const Vector& features, const DenseMatrix& head, std::size_t k,
                        double eps) {
    const Vector logits = matvec_transposed(head, features);
    const Vector p = nn::softmax(logits, eps);
    Vector wk(head.rows);
    for (std::size_t f = 0; f < head.rows; ++f) wk[f] = head.at(f, k);
    double u = (1.0 - p[k]) * dot(wk, wk);
    for (std::size_t kp = 0; kp < head.cols; ++kp) {
        if (kp == k) continue;
        double inner = 0.0;
        for (std::size_t f = 0; f < head.rows; ++f) inner += head.at(f, kp) * wk[f];
        u -= p[kp] * inner;
    }
    return u;
}

double expected_cost(const Vector& features, const DenseMatrix& head, const CostMatrix& cost,
                     std::size_t k, double eps) {
    const Vector logits = matvec_transposed(head, features);
    const Vector p = nn::softmax(logits, eps);
    double e = 0.0;
    for (std::size_t kp = 0; kp < cost.num_classes(); ++kp) e += cost.c.at(k, kp) * p[kp];
    return e;
}

MetricReport validate_metric(CostMatrix& cost, double tol) {
    MetricReport report;
    const std::size_t n = cost.num_classes();
    using Kind = MetricViolation::Kind;
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(cost.c.at(i, i)) > tol)
            report.violations.push_back({Kind::Diagonal, i, i, 0, std::abs(cost.c.at(i, i))});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::abs(cost.c.at(i, j) - cost.c.at(j, i));
            if (d > tol) report.violations.push_back({Kind::Symmetry, i, j, 0, d});
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                if (i == j || j == k || i == k) continue;
                const double excess = cost.c.at(i, k) - cost.c.at(i, j) - cost.c.at(j, k);
                if (excess > tol)
                    report.violations.push_back({Kind::Triangle, i, j, k, excess});
            }
    report.valid = report.violations.empty();
    cost.metric_valid = report.valid;
    return report;
}

Dendrogram hierarchical_cluster(const CostMatrix& cost) {
    const std::size_t n = cost.num_classes();
    Dendrogram d;
    d.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.nodes[i].members = {static_cast<int>(i)};

    struct Cluster {
        int node;        // index into d.nodes
        int rep;         // smallest original member, for tie-breaking
        std::size_t size;
    };
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < n; ++i)
        active.push_back({static_cast<int>(i), static_cast<int>(i), 1});

    // pairwise average dissimilarity between active clusters, keyed by node id
    const std::size_t total_nodes = 2 * n - 1;
    std::vector<std::vector<double>> dist(total_nodes, std::vector<double>(total_nodes, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) dist[i][j] = cost.c.at(i, j);

    while (active.size() > 1) {
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < active.size(); ++i)
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                const double v = dist[active[i].node][active[j].node];
                auto rep = std::minmax(active[i].rep, active[j].rep);
                auto brep = std::minmax(active[bi].rep, active[bj].rep);
                if (v < best || (v == best && rep < brep)) {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        const Cluster a = active[bi], b = active[bj];
        DendrogramNode node;
        node.left = a.node;
        node.right = b.node;
        node.height = best;
        node.members = d.nodes[a.node].members;
        node.members.insert(node.members.end(), d.nodes[b.node].members.begin(),
                            d.nodes[b.node].members.end());
        std::sort(node.members.begin(), node.members.end());
        const int new_node = static_cast<int>(d.nodes.size());
        d.nodes.push_back(std::move(node));
        d.merge_heights.push_back(best);

        // Lance-Williams update for average linkage
        const double wa = static_cast<double>(a.size) / static_cast<double>(a.size + b.size);
        const double wb = 1.0 - wa;
        for (const Cluster& other : active) {
            if (other.node == a.node || other.node == b.node) continue;
            const double v = wa * dist[a.node][other.node] + wb * dist[b.node][other.node];
            dist[new_node][other.node] = v;
            dist[other.node][new_node] = v;
        }
        active.erase(active.begin() + static_cast<long>(bj));
        active.erase(active.begin() + static_cast<long>(bi));
        active.push_back({new_node, std::min(a.rep, b.rep), a.size + b.size});
    }
    d.root = active.front().node;
    return d;
}

namespace {

nlohmann::json node_to_json(const Dendrogram& d, int idx,
                            const std::vector<std::string>& labels) {
    const DendrogramNode& node = d.nodes[static_cast<std::size_t>(idx)];
    nlohmann::json j;
    nlohmann::json members = nlohmann::json::array();
    for (int m : node.members)
        members.push_back(labels.empty() ? std::to_string(m)
                                         : labels[static_cast<std::size_t>(m)]);
    j["members"] = members;
    if (node.left >= 0) {
        j["left"] = node_to_json(d, node.left, labels);
        j["right"] = node_to_json(d, node.right, labels);
        j["height"] = node.height;
    }
    return j;
}

}  // namespace

std::string dendrogram_to_json(const Dendrogram& d, const std::vector<std::string>& labels) {
    return node_to_json(d, d.root, labels).dump(2);
}

void write_cost_csv(const CostMatrix& cost, const std::vector<std::string>& labels,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_cost_csv: cannot open " + path);
    const std::size_t n = cost.num_classes();
    out << "class";
    for (std::size_t j = 0; j < n; ++j)
        out << "," << (labels.empty() ? std::to_string(j) : labels[j]);
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        out << (labels.empty() ? std::to_string(i) : labels[i]);
        for (std::size_t j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", cost.c.at(i, j));
            out << "," << buf;
        }
        out << "\n";
    }
}

}  // namespace otmatch::costs
