#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otmatch/checkpoint.hpp"
#include "otmatch/cost.hpp"
#include "otmatch/ot.hpp"
#include "otmatch/train.hpp"

namespace {

using otmatch::DenseMatrix;
using otmatch::Vector;

int cmd_train(const std::string& config_path) {
    otmatch::train::TrainConfig cfg = otmatch::train::TrainConfig::from_file(config_path);
    otmatch::train::Trainer trainer(cfg);
    trainer.run();
    std::cout << "final eval accuracy (student): " << trainer.evaluate_student() << "\n";
    std::cout << "final eval accuracy (teacher): " << trainer.evaluate_teacher() << "\n";
    std::cout << "metrics: " << cfg.out_dir << "/metrics.csv\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path) {
    otmatch::train::TrainConfig cfg = otmatch::train::TrainConfig::from_file(config_path);
    otmatch::train::Trainer trainer(cfg);
    trainer.restore(otmatch::checkpoint::load(ckpt_path));
    std::cout << "step " << trainer.step() << "\n";
    std::cout << "eval accuracy (student): " << trainer.evaluate_student() << "\n";
    std::cout << "eval accuracy (teacher): " << trainer.evaluate_teacher() << "\n";
    return 0;
}

struct Instance {
    Vector mu, nu;
    DenseMatrix cost;
    double epsilon = 0.01;
};

Instance parse_instance(const nlohmann::json& j) {
    Instance inst;
    inst.mu = j.at("mu").get<Vector>();
    inst.nu = j.at("nu").get<Vector>();
    const Vector flat = j.at("cost").get<Vector>();
    if (flat.size() != inst.mu.size() * inst.nu.size())
        throw std::runtime_error("cost length != |mu| * |nu|");
    inst.cost = DenseMatrix(inst.mu.size(), inst.nu.size());
    inst.cost.values = flat;
    if (j.contains("epsilon")) inst.epsilon = j.at("epsilon").get<double>();
    return inst;
}

std::optional<std::size_t> dirac_index(const Vector& mu) {
    std::optional<std::size_t> k;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (mu[i] == 0.0) continue;
        if (k || std::abs(mu[i] - 1.0) > 1e-12) return std::nullopt;
        k = i;
    }
    return k;
}

template <typename F>
double timed_us(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::micro>(t1 - t0).count();
}

void scaling_report() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::cout << "\nfast_dirac_ot scaling (mean per call):\n";
    std::cout << "K,reps,us_per_call\n";
    std::vector<double> log_k, log_t;
    for (std::size_t k : {4u, 16u, 64u, 256u, 1024u, 4096u}) {
        DenseMatrix c(k, k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) c.at(i, j) = i == j ? 0.0 : 0.5 + unif(rng);
        Vector nu(k);
        double s = 0.0;
        for (double& v : nu) s += (v = unif(rng));
        for (double& v : nu) v /= s;
        const std::size_t reps = std::max<std::size_t>(64, (1u << 22) / k);
        volatile double sink = 0.0;
        const double us = timed_us([&] {
            for (std::size_t r = 0; r < reps; ++r)
                sink = sink + otmatch::ot::fast_dirac_ot(r % k, nu, c);
        });
        const double per_call = us / static_cast<double>(reps);
        std::printf("%zu,%zu,%.4f\n", k, reps, per_call);
        log_k.push_back(std::log(static_cast<double>(k)));
        log_t.push_back(std::log(per_call));
    }
    // least-squares slope of log t vs log K
    const std::size_t n = log_k.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += log_k[i];
        sy += log_t[i];
        sxx += log_k[i] * log_k[i];
        sxy += log_k[i] * log_t[i];
        syy += log_t[i] * log_t[i];
    }
    const double dn = static_cast<double>(n);
    const double slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    const double r = (dn * sxy - sx * sy) /
                     std::sqrt((dn * sxx - sx * sx) * (dn * syy - sy * sy));
    std::printf("log-log slope %.3f (R^2 %.3f)\n", slope, r * r);
}

int cmd_ot_bench(const std::string& path, bool scaling) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "ot-bench: cannot open " << path << "\n";
        return 1;
    }
    std::cout << "line,m,n,exact,sinkhorn,fast_dirac,|sk-exact|,|fd-exact|,"
                 "exact_us,sinkhorn_us,fast_dirac_us\n";
    std::string line;
    std::size_t lineno = 0;
    int rc = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Instance inst;
        try {
            inst = parse_instance(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
            std::cerr << "ot-bench: line " << lineno << ": " << e.what() << "\n";
            return 2;
        }
        try {
            otmatch::ot::OTResult exact;
            const double t_exact =
                timed_us([&] { exact = otmatch::ot::exact_ot(inst.mu, inst.nu, inst.cost); });
            otmatch::ot::OTConfig cfg;
            cfg.epsilon = inst.epsilon;
            cfg.marginal_tolerance = 1e-9;
            otmatch::ot::SinkhornResult sk;
            const double t_sk =
                timed_us([&] { sk = otmatch::ot::sinkhorn(inst.mu, inst.nu, inst.cost, cfg); });
            const std::optional<std::size_t> k = dirac_index(inst.mu);
            double fd = std::nan("");
            double t_fd = std::nan("");
            if (k)
                t_fd = timed_us([&] { fd = otmatch::ot::fast_dirac_ot(*k, inst.nu, inst.cost); });
            std::printf("%zu,%zu,%zu,%.12g,%.12g,%.12g,%.3g,%.3g,%.1f,%.1f,%.1f\n", lineno,
                        inst.mu.size(), inst.nu.size(), exact.distance, sk.distance, fd,
                        std::abs(sk.distance - exact.distance),
                        k ? std::abs(fd - exact.distance) : std::nan(""), t_exact, t_sk, t_fd);
        } catch (const std::exception& e) {
            std::cerr << "ot-bench: line " << lineno << ": solver error: " << e.what() << "\n";
            rc = 1;
        }
    }
    if (scaling) scaling_report();
    return rc;
}

int cmd_cost_cluster(const std::string& ckpt_path, const std::string& json_out,
                     const std::string& csv_out) {
    otmatch::checkpoint::Checkpoint ckpt = otmatch::checkpoint::load(ckpt_path);
    otmatch::costs::Dendrogram d = otmatch::costs::hierarchical_cluster(ckpt.cost);
    const std::string json = otmatch::costs::dendrogram_to_json(d, {});
    if (json_out.empty()) {
        std::cout << json << "\n";
    } else {
        std::ofstream out(json_out);
        out << json << "\n";
        std::cout << "dendrogram: " << json_out << "\n";
    }
    if (!csv_out.empty()) {
        otmatch::costs::write_cost_csv(ckpt.cost, {}, csv_out);
        std::cout << "cost matrix: " << csv_out << "\n";
    }
    bool nondecreasing = true;
    for (std::size_t i = 1; i < d.merge_heights.size(); ++i)
        if (d.merge_heights[i] < d.merge_heights[i - 1] - 1e-12) nondecreasing = false;
    std::cout << "merges " << d.merge_heights.size() << ", heights nondecreasing: "
              << (nondecreasing ? "yes" : "no") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OTMatch semi-supervised learning engine"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, instances_path, json_out, csv_out;
    bool scaling = false;

    CLI::App* train = app.add_subcommand("train", "Run the training loop from a config file");
    train->add_option("--config", config_path, "flat key=value config file")->required();

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the eval split");
    eval->add_option("--config", config_path, "config file used for the run")->required();
    eval->add_option("--checkpoint", ckpt_path, "checkpoint JSON")->required();

    CLI::App* bench = app.add_subcommand(
        "ot-bench", "Compare exact / Sinkhorn / Dirac-shortcut solvers on instance files");
    bench->add_option("instances", instances_path, "JSONL file: {mu, nu, cost, epsilon} per line")
        ->required();
    bench->add_flag("--scaling", scaling, "also time fast_dirac_ot across K");

    CLI::App* cluster =
        app.add_subcommand("cost-cluster", "Hierarchical clustering of a learned cost matrix");
    cluster->add_option("--checkpoint", ckpt_path, "checkpoint JSON")->required();
    cluster->add_option("--json", json_out, "dendrogram JSON output path");
    cluster->add_option("--csv", csv_out, "cost matrix CSV output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path);
        if (*eval) return cmd_eval(config_path, ckpt_path);
        if (*bench) return cmd_ot_bench(instances_path, scaling);
        if (*cluster) return cmd_cost_cluster(ckpt_path, json_out, csv_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
