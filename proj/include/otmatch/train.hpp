#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "otmatch/checkpoint.hpp"
#include "otmatch/cost.hpp"
#include "otmatch/data.hpp"
#include "otmatch/losses.hpp"
#include "otmatch/nn.hpp"
#include "otmatch/thresholds.hpp"

namespace otmatch::train {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key=value training configuration with typed validation.
struct TrainConfig {
    // data
    std::string dataset = "two_moons";  // two_moons | gaussian_mixture | idx
    std::size_t dataset_n = 1000;
    double dataset_noise = 0.1;
    std::size_t num_labeled = 4;
    std::size_t eval_n = 1000;
    std::string idx_images;  // for dataset=idx
    std::string idx_labels;
    std::size_t num_classes = 2;

    // model
    std::vector<std::size_t> hidden = {32, 32};

    // optimization
    std::size_t batch_size = 4;   // B
    std::size_t mu = 7;           // unlabeled ratio
    std::size_t total_steps = 20000;
    double base_lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 5e-4;

    // OTMatch
    double teacher_epsilon = 1.0;  // softmax temperature for the teacher; 0 = hard one-hot limit
    double lambda = 0.5;
    double w1 = 1.0;
    double w2 = 0.001;
    double cost_momentum = 0.999;
    double ema_decay = 0.999;
    double threshold_momentum = 0.999;
    bool binary_cost = false;  // ablation: freeze C at the discrete metric

    // augmentation
    data::AugmentConfig aug;

    // harness
    std::uint64_t seed = 1;
    std::size_t eval_interval = 512;
    std::size_t checkpoint_interval = 0;  // 0 = final only
    std::string out_dir = "out";

    static TrainConfig from_file(const std::string& path);
    void validate() const;
};

struct MetricsRow {
    std::size_t step = 0;
    double lr = 0.0;
    double loss_sup = 0.0;
    double loss_un1 = 0.0;
    double loss_un2 = 0.0;
    double loss_un3 = 0.0;
    double loss_total = 0.0;
    double mask_rate = 0.0;
    double tau_global = 0.0;
    std::optional<double> train_acc;
    std::optional<double> eval_acc;
};

std::string metrics_header();
std::string metrics_csv_row(const MetricsRow& row);

/// Top-1 accuracy on the labeled examples of a dataset, no augmentation.
double evaluate(const nn::ModelParams& params, const data::Dataset& ds);

class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    /// Samples a mixed batch and runs one Algorithm step.
    MetricsRow step_once();

    /// One full training step on a prepared batch (loss pipeline in the
    /// algorithm's line order, then SGD on the student and EMA on the teacher).
    MetricsRow train_step(const data::MixedBatch& batch);

    /// Full run: metrics CSV, eval cadence, checkpoints, timing summary.
    void run();

    checkpoint::Checkpoint make_checkpoint() const;
    void restore(const checkpoint::Checkpoint& ckpt);

    double evaluate_student() const { return evaluate(model_, eval_set_); }
    double evaluate_teacher() const { return evaluate(teacher_.params, eval_set_); }
    double mean_step_seconds() const;

    const TrainConfig& config() const { return cfg_; }
    const costs::CostMatrix& cost() const { return cost_; }
    const thresholds::ThresholdState& threshold_state() const { return thr_; }
    const nn::ModelParams& model() const { return model_; }
    const nn::TeacherParams& teacher() const { return teacher_; }
    std::size_t step() const { return opt_.step; }

  private:
    TrainConfig cfg_;
    data::Dataset train_set_;
    data::Dataset eval_set_;
    std::vector<std::size_t> labeled_idx_;
    std::vector<std::size_t> unlabeled_idx_;
    nn::ModelParams model_;
    nn::TeacherParams teacher_;
    nn::OptimizerState opt_;
    thresholds::ThresholdState thr_;
    costs::CostMatrix cost_;
    losses::LossWeights weights_;
    std::mt19937_64 rng_;
    double total_step_seconds_ = 0.0;
    std::size_t timed_steps_ = 0;

    void dump_diagnostics(const MetricsRow& row) const;
};

}  // namespace otmatch::train
