#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "otmatch/matrix.hpp"

namespace otmatch::nn {

enum class Activation { Relu, Identity };

struct DenseLayer {
    DenseMatrix weight;  // out_dim x in_dim
    Vector bias;         // out_dim
    Activation act = Activation::Relu;
};

/// Feature extractor plus linear classification head. The head is stored as
/// feature_dim x K so that column k is the class vector w_k.
struct ModelParams {
    std::vector<DenseLayer> extractor;
    DenseMatrix head;

    std::size_t input_dim() const {
        return extractor.empty() ? head.rows : extractor.front().weight.cols;
    }
    std::size_t feature_dim() const { return head.rows; }
    std::size_t num_classes() const { return head.cols; }
};

/// MLP with ReLU hidden layers; weights drawn from a scaled uniform init.
ModelParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t num_classes, std::mt19937_64& rng);

/// probs = softmax(logits / eps). eps == 0 selects the hard one-hot limit
/// (ties broken toward the lowest index).
Vector softmax(const Vector& logits, double eps = 1.0);

struct ForwardResult {
    Vector features;
    Vector logits;
    Vector probs;
};

struct ForwardCache {
    std::vector<Vector> inputs;  // input to each extractor layer
    std::vector<Vector> pre;     // pre-activation of each extractor layer
    Vector features;
    Vector logits;
    Vector probs;
};

ForwardResult forward(const ModelParams& params, const Vector& x, double eps = 1.0);
ForwardCache forward_cached(const ModelParams& params, const Vector& x, double eps = 1.0);

struct ParamGrads {
    std::vector<DenseMatrix> weight;  // per extractor layer
    std::vector<Vector> bias;
    DenseMatrix head;

    static ParamGrads zeros_like(const ModelParams& p);
    void add(const ParamGrads& o);
    void scale(double s);
};

/// Per-sample backward pass from a gradient w.r.t. the logits.
ParamGrads backward(const ModelParams& params, const ForwardCache& cache, const Vector& dlogits);

/// Maps a gradient w.r.t. probs through the tempered-softmax Jacobian.
Vector softmax_backward(const Vector& probs, const Vector& dprobs, double eps = 1.0);

struct OptimizerState {
    ParamGrads velocity;
    std::size_t step = 0;
    double base_lr = 0.03;
    std::size_t total_steps = 1;
    double momentum = 0.9;
    double weight_decay = 5e-4;

    static OptimizerState init(const ModelParams& p, double base_lr, std::size_t total_steps,
                               double momentum, double weight_decay);
};

/// Half-cosine schedule: eta0 * 0.5 * (1 + cos(pi t / T)).
double cosine_lr(std::size_t t, std::size_t total, double eta0);

/// v <- momentum v + (g + wd p); p <- p - lr(t) v; increments the step counter.
void sgd_step(ModelParams& params, OptimizerState& opt, const ParamGrads& grads);

struct TeacherParams {
    ModelParams params;
    double ema_decay = 0.999;
};

/// teacher <- decay * teacher + (1 - decay) * student, elementwise.
void ema_update(TeacherParams& teacher, const ModelParams& student);

// Batch kernels. The parallel versions compute per-sample work under OpenMP
// and reduce gradients serially in sample order, so results are identical to
// the serial reference for any thread count.
std::vector<ForwardResult> batch_forward(const ModelParams& params,
                                         std::span<const Vector> xs, double eps = 1.0);
std::vector<ForwardResult> batch_forward_serial(const ModelParams& params,
                                                std::span<const Vector> xs, double eps = 1.0);

/// Sum of per-sample gradients; dlogits[i] pairs with xs[i].
ParamGrads batch_backward(const ModelParams& params, std::span<const Vector> xs,
                          std::span<const Vector> dlogits);
ParamGrads batch_backward_serial(const ModelParams& params, std::span<const Vector> xs,
                                 std::span<const Vector> dlogits);

}  // namespace otmatch::nn
