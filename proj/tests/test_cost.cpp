#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "otmatch/cost.hpp"
#include "otmatch/nn.hpp"
#include "otmatch/ot.hpp"
#include "otmatch/thresholds.hpp"
#include "test_util.hpp"

using namespace otmatch;

TEST_CASE("discrete init") {
    const costs::CostMatrix c = costs::init_discrete(4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(c.c.at(i, j) == (i == j ? 0.0 : 1.0));
    CHECK_THROWS_AS(costs::init_discrete(1), std::invalid_argument);
}

TEST_CASE("head directions are unit vectors; zero columns are rejected") {
    std::mt19937_64 rng(61);
    const DenseMatrix head = testutil::random_unit_head(5, 3, rng);
    const std::vector<Vector> dirs = costs::head_directions(head);
    for (const Vector& v : dirs) CHECK(norm2(v) == doctest::Approx(1.0).epsilon(1e-12));

    DenseMatrix degenerate(3, 2);
    degenerate.at(0, 0) = 1.0;  // column 1 stays all-zero
    CHECK_THROWS_AS(costs::head_directions(degenerate), costs::DegenerateHeadError);
}

TEST_CASE("cost EMA update: fixed point, exact symmetry, zero diagonal") {
    std::mt19937_64 rng(67);
    const std::size_t k = 5, f = 7;
    DenseMatrix head = testutil::random_unit_head(f, k, rng);
    // target matrix 1 - <v_i, v_j>
    const std::vector<Vector> dirs = costs::head_directions(head);
    DenseMatrix target(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) target.at(i, j) = 1.0 - dot(dirs[i], dirs[j]);

    costs::CostMatrix c = costs::init_discrete(k, 0.9);
    for (int step = 0; step < 400; ++step) costs::ema_update_cost(c, head);
    for (std::size_t i = 0; i < k; ++i) {
        CHECK(c.c.at(i, i) == 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            CHECK(c.c.at(i, j) == c.c.at(j, i));  // bitwise
            if (i != j) CHECK(c.c.at(i, j) == doctest::Approx(target.at(i, j)).epsilon(1e-9));
        }
    }

    // single-step arithmetic: 0.9 * 1 + 0.1 * (1 - <v_0, v_1>)
    costs::CostMatrix one = costs::init_discrete(k, 0.9);
    costs::ema_update_cost(one, head);
    CHECK(one.c.at(0, 1) ==
          doctest::Approx(0.9 + 0.1 * (1.0 - dot(dirs[0], dirs[1]))).epsilon(1e-12));
}

TEST_CASE("gradient-score U equals the expected cost under 1 - <v,v'> for unit heads") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + trial % 5, f = 3 + trial % 4;
        const DenseMatrix head = testutil::random_unit_head(f, k, rng);
        Vector feat(f);
        for (double& v : feat) v = gauss(rng);

        costs::CostMatrix cost = costs::init_discrete(k, 0.0);
        costs::ema_update_cost(cost, head);  // momentum 0: jump straight to 1 - <v_i,v_j>

        const Vector logits = matvec_transposed(head, feat);
        const std::size_t kk = thresholds::argmax(nn::softmax(logits));
        CHECK(costs::gradient_score_u(feat, head, kk) ==
              doctest::Approx(costs::expected_cost(feat, head, cost, kk)).epsilon(1e-9));
    }
}

TEST_CASE("metric validation flags each violation type") {
    costs::CostMatrix ok = costs::init_discrete(3);
    costs::MetricReport r = costs::validate_metric(ok, 1e-9);
    CHECK(r.valid);
    CHECK(ok.metric_valid);

    costs::CostMatrix bad = costs::init_discrete(3);
    bad.c.at(0, 0) = 0.5;  // diagonal
    r = costs::validate_metric(bad, 1e-9);
    CHECK_FALSE(r.valid);
    CHECK_FALSE(bad.metric_valid);
    CHECK(r.violations.front().kind == costs::MetricViolation::Kind::Diagonal);

    costs::CostMatrix asym = costs::init_discrete(3);
    asym.c.at(0, 1) = 2.0;
    r = costs::validate_metric(asym, 1e-9);
    bool saw_sym = false;
    for (const auto& v : r.violations) saw_sym |= v.kind == costs::MetricViolation::Kind::Symmetry;
    CHECK(saw_sym);

    costs::CostMatrix tri = costs::init_discrete(3);
    tri.c.at(0, 1) = tri.c.at(1, 0) = 5.0;  // 5 > C(0,2) + C(2,1) = 2
    r = costs::validate_metric(tri, 1e-9);
    bool saw_tri = false;
    for (const auto& v : r.violations) saw_tri |= v.kind == costs::MetricViolation::Kind::Triangle;
    CHECK(saw_tri);
}

TEST_CASE("average-linkage clustering on a hand-worked 4-point instance") {
    // distances: d(0,1)=1, d(2,3)=2, cross-block distances all 10.
    costs::CostMatrix c = costs::init_discrete(4);
    auto set = [&](std::size_t i, std::size_t j, double v) {
        c.c.at(i, j) = c.c.at(j, i) = v;
    };
    set(0, 1, 1.0);
    set(2, 3, 2.0);
    set(0, 2, 10.0);
    set(0, 3, 10.0);
    set(1, 2, 10.0);
    set(1, 3, 10.0);

    const costs::Dendrogram d = costs::hierarchical_cluster(c);
    REQUIRE(d.merge_heights.size() == 3);
    CHECK(d.merge_heights[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.merge_heights[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(d.merge_heights[2] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(d.nodes[static_cast<std::size_t>(d.root)].members ==
          std::vector<int>{0, 1, 2, 3});

    // heights never decrease for a metric dissimilarity on random instances
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        costs::CostMatrix rc{testutil::random_metric_cost(6, rng), 0.999, true};
        const costs::Dendrogram rd = costs::hierarchical_cluster(rc);
        for (std::size_t i = 1; i < rd.merge_heights.size(); ++i)
            CHECK(rd.merge_heights[i] >= rd.merge_heights[i - 1] - 1e-12);
    }
}

TEST_CASE("dendrogram JSON parses and mirrors the tree") {
    costs::CostMatrix c = costs::init_discrete(3);
    const costs::Dendrogram d = costs::hierarchical_cluster(c);
    const std::string js = costs::dendrogram_to_json(d, {"a", "b", "c"});
    const nlohmann::json parsed = nlohmann::json::parse(js);
    CHECK(parsed.contains("members"));
    CHECK(parsed["members"].size() == 3);
}

TEST_CASE("cost CSV round trip") {
    costs::CostMatrix c = costs::init_discrete(3);
    c.c.at(0, 1) = c.c.at(1, 0) = 0.123456789012345678;
    const std::string path = "cost_test_tmp.csv";
    costs::write_cost_csv(c, {"x", "y", "z"}, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header.find("x") != std::string::npos);
    std::string line;
    std::getline(in, line);
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // row label
    std::getline(ss, cell, ',');  // C(0,0)
    std::getline(ss, cell, ',');  // C(0,1)
    CHECK(std::stod(cell) == doctest::Approx(c.c.at(0, 1)).epsilon(1e-15));
    in.close();
    std::remove(path.c_str());
}
