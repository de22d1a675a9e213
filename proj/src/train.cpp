#include "otmatch/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace otmatch::train {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class KvFile {
  public:
    explicit KvFile(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: line " + std::to_string(lineno) +
                                  ": expected key = value");
            kv_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
    }

    template <typename T, typename Parse>
    void get(const std::string& key, T& out, Parse parse) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return;
        try {
            out = parse(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config: bad value for key '" + key + "'");
        }
        kv_.erase(it);
    }

    void get_double(const std::string& key, double& out) {
        get(key, out, [](const std::string& s) { return std::stod(s); });
    }
    void get_size(const std::string& key, std::size_t& out) {
        get(key, out, [](const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); });
    }
    void get_u64(const std::string& key, std::uint64_t& out) {
        get(key, out, [](const std::string& s) { return std::stoull(s); });
    }
    void get_string(const std::string& key, std::string& out) {
        get(key, out, [](const std::string& s) { return s; });
    }
    void get_bool(const std::string& key, bool& out) {
        get(key, out, [](const std::string& s) {
            if (s == "true" || s == "1") return true;
            if (s == "false" || s == "0") return false;
            throw std::invalid_argument("bool");
        });
    }
    void get_int(const std::string& key, int& out) {
        get(key, out, [](const std::string& s) { return std::stoi(s); });
    }

    void reject_unknown() const {
        if (!kv_.empty())
            throw ConfigError("config: unknown key '" + kv_.begin()->first + "'");
    }

  private:
    std::map<std::string, std::string> kv_;
};

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    return out;
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
    TrainConfig c;
    KvFile kv(path);
    kv.get_string("dataset", c.dataset);
    kv.get_size("dataset_n", c.dataset_n);
    kv.get_double("dataset_noise", c.dataset_noise);
    kv.get_size("num_labeled", c.num_labeled);
    kv.get_size("eval_n", c.eval_n);
    kv.get_string("idx_images", c.idx_images);
    kv.get_string("idx_labels", c.idx_labels);
    kv.get_size("num_classes", c.num_classes);
    kv.get("hidden", c.hidden, parse_size_list);
    kv.get_size("batch_size", c.batch_size);
    kv.get_size("mu", c.mu);
    kv.get_size("total_steps", c.total_steps);
    kv.get_double("base_lr", c.base_lr);
    kv.get_double("momentum", c.momentum);
    kv.get_double("weight_decay", c.weight_decay);
    kv.get_double("teacher_epsilon", c.teacher_epsilon);
    kv.get_double("lambda", c.lambda);
    kv.get_double("w1", c.w1);
    kv.get_double("w2", c.w2);
    kv.get_double("cost_momentum", c.cost_momentum);
    kv.get_double("ema_decay", c.ema_decay);
    kv.get_double("threshold_momentum", c.threshold_momentum);
    kv.get_bool("binary_cost", c.binary_cost);
    kv.get_double("weak_noise", c.aug.weak_noise);
    kv.get_double("strong_noise_factor", c.aug.strong_noise_factor);
    kv.get_double("strong_mask_fraction", c.aug.strong_mask_fraction);
    kv.get_int("shift_max", c.aug.shift_max);
    kv.get_double("cutout_fraction", c.aug.cutout_fraction);
    kv.get_double("brightness_jitter", c.aug.brightness_jitter);
    kv.get_u64("seed", c.seed);
    kv.get_size("eval_interval", c.eval_interval);
    kv.get_size("checkpoint_interval", c.checkpoint_interval);
    kv.get_string("out_dir", c.out_dir);
    kv.reject_unknown();
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
    if (batch_size == 0 || batch_size % num_classes != 0)
        throw ConfigError("config: batch_size must divide evenly by num_classes");
    if (mu == 0) throw ConfigError("config: mu must be positive");
    if (total_steps == 0) throw ConfigError("config: total_steps must be positive");
    if (base_lr <= 0.0) throw ConfigError("config: base_lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
    if (teacher_epsilon < 0.0) throw ConfigError("config: teacher_epsilon must be >= 0");
    if (lambda < 0.0 || w1 < 0.0 || w2 < 0.0)
        throw ConfigError("config: loss weights must be nonnegative");
    for (double m : {cost_momentum, ema_decay, threshold_momentum})
        if (m < 0.0 || m >= 1.0) throw ConfigError("config: EMA decays must be in [0,1)");
    if (num_labeled % num_classes != 0)
        throw ConfigError("config: num_labeled must divide evenly by num_classes");
    if (dataset != "two_moons" && dataset != "gaussian_mixture" && dataset != "idx")
        throw ConfigError("config: unknown dataset '" + dataset + "'");
    if (dataset == "two_moons" && num_classes != 2)
        throw ConfigError("config: two_moons has exactly 2 classes");
    if (dataset == "idx" && (idx_images.empty() || idx_labels.empty()))
        throw ConfigError("config: dataset=idx needs idx_images and idx_labels");
    if (eval_interval == 0) throw ConfigError("config: eval_interval must be positive");
}

namespace {

data::Dataset load_idx_dataset(const TrainConfig& cfg) {
    data::Dataset images = data::read_idx(cfg.idx_images);
    data::Dataset labels = data::read_idx(cfg.idx_labels);
    if (labels.examples.size() != images.examples.size())
        throw ConfigError("config: idx image/label counts differ");
    for (std::size_t i = 0; i < images.examples.size(); ++i)
        images.examples[i].label =
            static_cast<int>(std::lround(labels.examples[i].x.at(0) * 255.0));
    images.num_classes = cfg.num_classes;
    return images;
}

data::Dataset build_train_set(const TrainConfig& cfg) {
    if (cfg.dataset == "two_moons")
        return data::gen_two_moons(cfg.dataset_n, cfg.dataset_noise, cfg.seed);
    if (cfg.dataset == "gaussian_mixture")
        return data::gen_gaussian_mixture(cfg.dataset_n, cfg.num_classes, cfg.dataset_noise,
                                          cfg.seed);
    return load_idx_dataset(cfg);
}

data::Dataset build_eval_set(const TrainConfig& cfg) {
    const std::uint64_t eval_seed = cfg.seed + 0x9e3779b9ull;
    if (cfg.dataset == "two_moons")
        return data::gen_two_moons(cfg.eval_n, cfg.dataset_noise, eval_seed);
    if (cfg.dataset == "gaussian_mixture")
        return data::gen_gaussian_mixture(cfg.eval_n, cfg.num_classes, cfg.dataset_noise,
                                          eval_seed);
    // for idx data the train file doubles as the eval set
    return load_idx_dataset(cfg);
}

}  // namespace

std::string metrics_header() {
    return "step,lr,loss_sup,loss_un1,loss_un2,loss_un3,loss_total,mask_rate,tau_global,"
           "train_acc,eval_acc";
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_csv_row(const MetricsRow& r) {
    std::string s = std::to_string(r.step);
    for (double v : {r.lr, r.loss_sup, r.loss_un1, r.loss_un2, r.loss_un3, r.loss_total,
                     r.mask_rate, r.tau_global})
        s += "," + fmt(v);
    s += ",";
    if (r.train_acc) s += fmt(*r.train_acc);
    s += ",";
    if (r.eval_acc) s += fmt(*r.eval_acc);
    return s;
}

double evaluate(const nn::ModelParams& params, const data::Dataset& ds) {
    std::size_t total = 0, correct = 0;
    for (const data::Example& e : ds.examples) {
        if (e.label < 0) continue;
        const nn::ForwardResult fr = nn::forward(params, e.x);
        if (thresholds::argmax(fr.probs) == static_cast<std::size_t>(e.label)) ++correct;
        ++total;
    }
    if (total == 0) throw std::invalid_argument("evaluate: no labeled examples");
    return static_cast<double>(correct) / static_cast<double>(total);
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      train_set_(build_train_set(cfg)),
      eval_set_(build_eval_set(cfg)),
      thr_(thresholds::ThresholdState::init(cfg.num_classes, cfg.threshold_momentum)),
      cost_(costs::init_discrete(cfg.num_classes, cfg.cost_momentum)),
      rng_(cfg.seed ^ 0x5deece66dull) {
    cfg_.validate();

    // class-balanced labeled pool: first num_labeled/K examples of each class
    const std::size_t per_class = cfg_.num_labeled / cfg_.num_classes;
    std::vector<std::size_t> taken(cfg_.num_classes, 0);
    for (std::size_t i = 0; i < train_set_.examples.size(); ++i) {
        const int y = train_set_.examples[i].label;
        if (y >= 0 && taken[static_cast<std::size_t>(y)] < per_class) {
            labeled_idx_.push_back(i);
            ++taken[static_cast<std::size_t>(y)];
        }
        unlabeled_idx_.push_back(i);
    }
    for (std::size_t c = 0; c < cfg_.num_classes; ++c)
        if (taken[c] < per_class)
            throw ConfigError("trainer: class " + std::to_string(c) +
                              " has too few labeled examples");

    std::mt19937_64 init_rng(cfg_.seed);
    model_ = nn::make_mlp(train_set_.dim, cfg_.hidden, cfg_.num_classes, init_rng);
    teacher_.params = model_;
    teacher_.ema_decay = cfg_.ema_decay;
    opt_ = nn::OptimizerState::init(model_, cfg_.base_lr, cfg_.total_steps, cfg_.momentum,
                                    cfg_.weight_decay);
    weights_ = {cfg_.w1, cfg_.w2, cfg_.lambda};
}

MetricsRow Trainer::train_step(const data::MixedBatch& batch) {
    const std::size_t b = batch.labels.size();
    const std::size_t ub = batch.unlabeled.size();
    MetricsRow row;
    row.step = opt_.step;
    row.lr = nn::cosine_lr(opt_.step, opt_.total_steps, opt_.base_lr);

    // supervised loss on weakly augmented labeled views
    const std::vector<nn::ForwardResult> sup_fwd =
        nn::batch_forward(model_, batch.labeled_weak);
    std::vector<Vector> sup_probs(b);
    for (std::size_t i = 0; i < b; ++i) sup_probs[i] = sup_fwd[i].probs;
    row.loss_sup = losses::loss_sup(batch.labels, sup_probs);

    // teacher predictions on weak views drive thresholds and pseudo-labels
    std::vector<Vector> weak_views(ub), strong_views(ub);
    for (std::size_t i = 0; i < ub; ++i) {
        weak_views[i] = batch.unlabeled[i].weak;
        strong_views[i] = batch.unlabeled[i].strong;
    }
    const std::vector<nn::ForwardResult> teacher_fwd =
        nn::batch_forward(teacher_.params, weak_views, cfg_.teacher_epsilon);

    losses::BatchPredictions preds;
    preds.teacher_probs.resize(ub);
    preds.hard_labels.resize(ub);
    for (std::size_t i = 0; i < ub; ++i) {
        preds.teacher_probs[i] = teacher_fwd[i].probs;
        preds.hard_labels[i] = thresholds::argmax(teacher_fwd[i].probs);
    }

    thresholds::update_state(thr_, preds.teacher_probs);
    const Vector tau_local = thresholds::local_thresholds(thr_);
    row.tau_global = thr_.tau;

    const std::vector<nn::ForwardResult> student_fwd =
        nn::batch_forward(model_, strong_views);
    preds.student_probs.resize(ub);
    preds.masks.resize(ub);
    std::size_t masked_in = 0;
    for (std::size_t i = 0; i < ub; ++i) {
        preds.student_probs[i] = student_fwd[i].probs;
        preds.masks[i] = thresholds::mask(preds.teacher_probs[i], tau_local);
        if (preds.masks[i]) ++masked_in;
    }
    row.mask_rate = static_cast<double>(masked_in) / static_cast<double>(ub);

    row.loss_un1 = losses::loss_un1(preds);

    Vector p_bar, h_bar;
    losses::masked_student_stats(preds, p_bar, h_bar);
    row.loss_un2 = losses::loss_un2(p_bar, h_bar, thr_);

    // cost update precedes the OT loss
    if (!cfg_.binary_cost) costs::ema_update_cost(cost_, model_.head);
    row.loss_un3 = losses::loss_un3(preds, cost_);

    row.loss_total =
        losses::loss_total(row.loss_sup, row.loss_un1, row.loss_un2, row.loss_un3, weights_);
    if (!std::isfinite(row.loss_total)) {
        dump_diagnostics(row);
        throw NumericError("train_step: non-finite loss at step " + std::to_string(row.step));
    }

    // gradients w.r.t. student logits; teacher quantities are constants
    std::vector<Vector> xs;
    std::vector<Vector> dlogits;
    xs.reserve(b + ub);
    dlogits.reserve(b + ub);
    for (std::size_t i = 0; i < b; ++i) {
        xs.push_back(batch.labeled_weak[i]);
        dlogits.push_back(losses::labeled_grad_logits(sup_probs[i], batch.labels[i], b));
    }
    const Vector g2 = losses::un2_grad_pbar(p_bar, h_bar, thr_);
    for (std::size_t i = 0; i < ub; ++i) {
        if (!preds.masks[i]) continue;
        xs.push_back(strong_views[i]);
        dlogits.push_back(losses::unlabeled_grad_logits(
            preds.student_probs[i], preds.hard_labels[i], true, g2, cost_, weights_, ub));
    }

    const nn::ParamGrads grads = nn::batch_backward(model_, xs, dlogits);
    nn::sgd_step(model_, opt_, grads);
    nn::ema_update(teacher_, model_);
    return row;
}

MetricsRow Trainer::step_once() {
    const auto t0 = std::chrono::steady_clock::now();
    const data::MixedBatch batch = data::sample_batch(
        train_set_, labeled_idx_, unlabeled_idx_, cfg_.batch_size, cfg_.mu, cfg_.aug, rng_);
    MetricsRow row = train_step(batch);
    const auto t1 = std::chrono::steady_clock::now();
    total_step_seconds_ += std::chrono::duration<double>(t1 - t0).count();
    ++timed_steps_;
    return row;
}

double Trainer::mean_step_seconds() const {
    return timed_steps_ == 0 ? 0.0 : total_step_seconds_ / static_cast<double>(timed_steps_);
}

void Trainer::run() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    std::ofstream metrics(fs::path(cfg_.out_dir) / "metrics.csv");
    if (!metrics) throw std::runtime_error("trainer: cannot open metrics.csv");
    metrics << metrics_header() << "\n";

    while (opt_.step < cfg_.total_steps) {
        MetricsRow row = step_once();
        const bool at_eval =
            (row.step + 1) % cfg_.eval_interval == 0 || row.step + 1 == cfg_.total_steps;
        if (at_eval) {
            row.train_acc = evaluate(model_, train_set_);
            row.eval_acc = evaluate_student();
            metrics << metrics_csv_row(row) << "\n";
            metrics.flush();
        } else {
            metrics << metrics_csv_row(row) << "\n";
        }
        if (cfg_.checkpoint_interval > 0 && (row.step + 1) % cfg_.checkpoint_interval == 0)
            checkpoint::save((fs::path(cfg_.out_dir) / "checkpoint.json").string(),
                             make_checkpoint());
    }
    checkpoint::save((fs::path(cfg_.out_dir) / "checkpoint.json").string(), make_checkpoint());

    // wall-clock summary lives outside the CSV so identical-seed runs stay
    // bitwise comparable
    std::ofstream timing(fs::path(cfg_.out_dir) / "timing.txt");
    timing << "steps " << timed_steps_ << "\n"
           << "mean_step_seconds " << mean_step_seconds() << "\n";
}

checkpoint::Checkpoint Trainer::make_checkpoint() const {
    checkpoint::Checkpoint ckpt;
    ckpt.step = opt_.step;
    ckpt.model = model_;
    ckpt.teacher = teacher_;
    ckpt.opt = opt_;
    ckpt.thr = thr_;
    ckpt.cost = cost_;
    std::ostringstream rng;
    rng << rng_;
    ckpt.rng_state = rng.str();
    return ckpt;
}

void Trainer::restore(const checkpoint::Checkpoint& ckpt) {
    model_ = ckpt.model;
    teacher_ = ckpt.teacher;
    opt_ = ckpt.opt;
    thr_ = ckpt.thr;
    cost_ = ckpt.cost;
    std::istringstream rng(ckpt.rng_state);
    rng >> rng_;
}

void Trainer::dump_diagnostics(const MetricsRow& row) const {
    nlohmann::json j;
    j["step"] = row.step;
    j["loss_sup"] = row.loss_sup;
    j["loss_un1"] = row.loss_un1;
    j["loss_un2"] = row.loss_un2;
    j["loss_un3"] = row.loss_un3;
    j["tau_global"] = thr_.tau;
    j["p_tilde"] = thr_.p_tilde;
    j["h_tilde"] = thr_.h_tilde;
    std::filesystem::create_directories(cfg_.out_dir);
    std::ofstream out(std::filesystem::path(cfg_.out_dir) / "diagnostics.json");
    out << j.dump(2) << "\n";
}

}  // namespace otmatch::train
