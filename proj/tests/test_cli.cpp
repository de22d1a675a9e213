#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

std::string cli_path() {
    const char* p = std::getenv("OTMATCH_CLI");
    REQUIRE_MESSAGE(p != nullptr, "OTMATCH_CLI must point at the CLI binary");
    return p;
}

// Runs the CLI, capturing stdout+stderr; returns the exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string out_file = "cli_out_tmp.txt";
    const std::string cmd = cli_path() + " " + args + " > " + out_file + " 2>&1";
    const int raw = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(out_file);
        std::stringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    std::remove(out_file.c_str());
#ifdef _WIN32
    return raw;
#else
    return WEXITSTATUS(raw);
#endif
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("cli: no arguments shows usage and fails") {
    std::string out;
    CHECK(run_cli("", &out) != 0);
}

TEST_CASE("cli: train runs a tiny job and writes artifacts") {
    namespace fs = std::filesystem;
    write_file("cli_train_tmp.cfg",
               "dataset = two_moons\n"
               "dataset_n = 60\n"
               "eval_n = 40\n"
               "num_labeled = 4\n"
               "hidden = 8\n"
               "batch_size = 2\n"
               "mu = 3\n"
               "total_steps = 8\n"
               "eval_interval = 4\n"
               "seed = 3\n"
               "out_dir = cli_train_tmp_out\n");
    std::string out;
    const int rc = run_cli("train --config cli_train_tmp.cfg", &out);
    CHECK_MESSAGE(rc == 0, out);
    CHECK(fs::exists("cli_train_tmp_out/metrics.csv"));
    CHECK(fs::exists("cli_train_tmp_out/checkpoint.json"));

    // eval subcommand reloads the checkpoint
    std::string eval_out;
    const int erc = run_cli(
        "eval --config cli_train_tmp.cfg --checkpoint cli_train_tmp_out/checkpoint.json",
        &eval_out);
    CHECK_MESSAGE(erc == 0, eval_out);
    CHECK(eval_out.find("accuracy") != std::string::npos);

    // cost-cluster prints a dendrogram summary from the same checkpoint
    std::string cl_out;
    const int crc = run_cli(
        "cost-cluster --checkpoint cli_train_tmp_out/checkpoint.json", &cl_out);
    CHECK_MESSAGE(crc == 0, cl_out);

    std::remove("cli_train_tmp.cfg");
    fs::remove_all("cli_train_tmp_out");
}

TEST_CASE("cli: train with a bad config fails with a config error") {
    write_file("cli_bad_tmp.cfg", "dattaset = nope\n");
    std::string out;
    CHECK(run_cli("train --config cli_bad_tmp.cfg", &out) != 0);
    std::remove("cli_bad_tmp.cfg");
}

TEST_CASE("cli: ot-bench on well-formed instances") {
    write_file("cli_ot_tmp.jsonl",
               R"({"mu":[0.5,0.5],"nu":[0.5,0.5],"cost":[0.0,1.0,1.0,0.0],"epsilon":0.05})"
               "\n"
               R"({"mu":[1.0,0.0,0.0],"nu":[0.5,0.3,0.2],"cost":[0.0,1.0,2.0,1.0,0.0,1.0,2.0,1.0,0.0],"epsilon":0.05})"
               "\n");
    std::string out;
    const int rc = run_cli("ot-bench cli_ot_tmp.jsonl", &out);
    CHECK_MESSAGE(rc == 0, out);
    CHECK(out.find("exact") != std::string::npos);
    std::remove("cli_ot_tmp.jsonl");
}

TEST_CASE("cli: ot-bench rejects malformed lines with exit code 2") {
    write_file("cli_ot_bad_tmp.jsonl",
               R"({"mu":[0.5,0.5],"nu":[0.5,0.5],"cost":[0.0,1.0,1.0,0.0],"epsilon":0.05})"
               "\n"
               "{not json at all\n");
    std::string out;
    CHECK(run_cli("ot-bench cli_ot_bad_tmp.jsonl", &out) == 2);
    CHECK(out.find("line 2") != std::string::npos);
    std::remove("cli_ot_bad_tmp.jsonl");

    write_file("cli_ot_bad2_tmp.jsonl", R"({"mu":[0.5,0.5],"nu":[0.9,0.1]})" "\n");
    CHECK(run_cli("ot-bench cli_ot_bad2_tmp.jsonl", &out) == 2);
    std::remove("cli_ot_bad2_tmp.jsonl");

    CHECK(run_cli("ot-bench no_such_file.jsonl", &out) != 0);
}
