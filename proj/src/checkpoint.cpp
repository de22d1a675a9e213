#include "otmatch/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace otmatch::checkpoint {

namespace {

using nlohmann::json;

std::string hex_encode(const std::vector<double>& v) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(v.size() * 16);
    for (double d : v) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
        for (int shift = 60; shift >= 0; shift -= 4)
            out.push_back(digits[(bits >> shift) & 0xf]);
    }
    return out;
}

std::vector<double> hex_decode(const std::string& s) {
    if (s.size() % 16 != 0) throw CheckpointError("checkpoint: bad hex payload length");
    std::vector<double> out(s.size() / 16);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (std::size_t c = 0; c < 16; ++c) {
            const char ch = s[i * 16 + c];
            std::uint64_t nib;
            if (ch >= '0' && ch <= '9')
                nib = static_cast<std::uint64_t>(ch - '0');
            else if (ch >= 'a' && ch <= 'f')
                nib = static_cast<std::uint64_t>(ch - 'a' + 10);
            else
                throw CheckpointError("checkpoint: bad hex digit");
            bits = (bits << 4) | nib;
        }
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::string hex1(double d) { return hex_encode({d}); }
double unhex1(const std::string& s) { return hex_decode(s).at(0); }

json matrix_to_json(const DenseMatrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"values", hex_encode(m.values)}};
}

DenseMatrix matrix_from_json(const json& j) {
    DenseMatrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.values = hex_decode(j.at("values").get<std::string>());
    if (m.values.size() != m.rows * m.cols)
        throw CheckpointError("checkpoint: matrix payload size mismatch");
    return m;
}

json model_to_json(const nn::ModelParams& p) {
    json layers = json::array();
    for (const nn::DenseLayer& l : p.extractor) {
        layers.push_back(json{{"weight", matrix_to_json(l.weight)},
                              {"bias", hex_encode(l.bias)},
                              {"act", l.act == nn::Activation::Relu ? "relu" : "identity"}});
    }
    return json{{"extractor", layers}, {"head", matrix_to_json(p.head)}};
}

nn::ModelParams model_from_json(const json& j) {
    nn::ModelParams p;
    for (const json& lj : j.at("extractor")) {
        nn::DenseLayer l;
        l.weight = matrix_from_json(lj.at("weight"));
        l.bias = hex_decode(lj.at("bias").get<std::string>());
        l.act = lj.at("act").get<std::string>() == "relu" ? nn::Activation::Relu
                                                          : nn::Activation::Identity;
        p.extractor.push_back(std::move(l));
    }
    p.head = matrix_from_json(j.at("head"));
    return p;
}

json grads_to_json(const nn::ParamGrads& g) {
    json weights = json::array(), biases = json::array();
    for (const DenseMatrix& w : g.weight) weights.push_back(matrix_to_json(w));
    for (const Vector& b : g.bias) biases.push_back(hex_encode(b));
    return json{{"weight", weights}, {"bias", biases}, {"head", matrix_to_json(g.head)}};
}

nn::ParamGrads grads_from_json(const json& j) {
    nn::ParamGrads g;
    for (const json& wj : j.at("weight")) g.weight.push_back(matrix_from_json(wj));
    for (const json& bj : j.at("bias")) g.bias.push_back(hex_decode(bj.get<std::string>()));
    g.head = matrix_from_json(j.at("head"));
    return g;
}

}  // namespace

void save(const std::string& path, const Checkpoint& ckpt) {
    json j;
    j["version"] = ckpt.version;
    j["step"] = ckpt.step;
    j["model"] = model_to_json(ckpt.model);
    j["teacher"] = json{{"params", model_to_json(ckpt.teacher.params)},
                        {"ema_decay", hex1(ckpt.teacher.ema_decay)}};
    j["opt"] = json{{"velocity", grads_to_json(ckpt.opt.velocity)},
                    {"step", ckpt.opt.step},
                    {"base_lr", hex1(ckpt.opt.base_lr)},
                    {"total_steps", ckpt.opt.total_steps},
                    {"momentum", hex1(ckpt.opt.momentum)},
                    {"weight_decay", hex1(ckpt.opt.weight_decay)}};
    j["thresholds"] = json{{"tau", hex1(ckpt.thr.tau)},
                           {"p_tilde", hex_encode(ckpt.thr.p_tilde)},
                           {"h_tilde", hex_encode(ckpt.thr.h_tilde)},
                           {"momentum", hex1(ckpt.thr.momentum)}};
    j["cost"] = json{{"c", matrix_to_json(ckpt.cost.c)},
                     {"momentum", hex1(ckpt.cost.momentum)},
                     {"metric_valid", ckpt.cost.metric_valid}};
    j["rng"] = ckpt.rng_state;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("checkpoint: cannot open " + tmp);
        out << j.dump();
        if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: parse error: ") + e.what());
    }
    Checkpoint ckpt;
    ckpt.version = j.at("version").get<std::uint32_t>();
    if (ckpt.version != 1) throw CheckpointError("checkpoint: unsupported version");
    ckpt.step = j.at("step").get<std::size_t>();
    ckpt.model = model_from_json(j.at("model"));
    ckpt.teacher.params = model_from_json(j.at("teacher").at("params"));
    ckpt.teacher.ema_decay = unhex1(j.at("teacher").at("ema_decay").get<std::string>());
    const json& oj = j.at("opt");
    ckpt.opt.velocity = grads_from_json(oj.at("velocity"));
    ckpt.opt.step = oj.at("step").get<std::size_t>();
    ckpt.opt.base_lr = unhex1(oj.at("base_lr").get<std::string>());
    ckpt.opt.total_steps = oj.at("total_steps").get<std::size_t>();
    ckpt.opt.momentum = unhex1(oj.at("momentum").get<std::string>());
    ckpt.opt.weight_decay = unhex1(oj.at("weight_decay").get<std::string>());
    const json& tj = j.at("thresholds");
    ckpt.thr.tau = unhex1(tj.at("tau").get<std::string>());
    ckpt.thr.p_tilde = hex_decode(tj.at("p_tilde").get<std::string>());
    ckpt.thr.h_tilde = hex_decode(tj.at("h_tilde").get<std::string>());
    ckpt.thr.momentum = unhex1(tj.at("momentum").get<std::string>());
    const json& cj = j.at("cost");
    ckpt.cost.c = matrix_from_json(cj.at("c"));
    ckpt.cost.momentum = unhex1(cj.at("momentum").get<std::string>());
    ckpt.cost.metric_valid = cj.at("metric_valid").get<bool>();
    ckpt.rng_state = j.at("rng").get<std::string>();
    return ckpt;
}

}  // namespace otmatch::checkpoint
