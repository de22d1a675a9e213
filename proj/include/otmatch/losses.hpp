#pragma once

#include <span>
#include <vector>

#include "otmatch/cost.hpp"
#include "otmatch/matrix.hpp"
#include "otmatch/thresholds.hpp"

namespace otmatch::losses {

struct LossWeights {
    double w1 = 1.0;
    double w2 = 0.001;
    double lambda = 0.5;
};

/// Teacher/student snapshots for one unlabeled batch. Teacher quantities are
/// constants within a step; gradients flow only through the student probs.
struct BatchPredictions {
    std::vector<Vector> teacher_probs;   // q, weak views
    std::vector<Vector> student_probs;   // Q, strong views
    std::vector<std::size_t> hard_labels;  // argmax(q)
    std::vector<bool> masks;
};

constexpr double kLogClamp = 1e-12;

/// Mean CE over the labeled batch: (1/B) sum H(y_i, probs_i).
double loss_sup(std::span<const std::size_t> labels, std::span<const Vector> probs);

/// Masked mean CE between hard pseudo-labels and student probs; the
/// denominator is the full unlabeled batch size.
double loss_un1(const BatchPredictions& batch);

/// Fairness loss -H(SumNorm(p_tilde/h_tilde), SumNorm(p_bar/h_bar)).
/// Returns 0 when no samples are masked in.
double loss_un2(const Vector& p_bar, const Vector& h_bar,
                const thresholds::ThresholdState& state);

/// Masked mean of W(delta_{q_hat}, Q) computed via the O(K) Dirac shortcut.
double loss_un3(const BatchPredictions& batch, const costs::CostMatrix& cost);

double loss_total(double sup, double un1, double un2, double un3, const LossWeights& w);

/// Masked mean of student probs and histogram of student hard labels
/// (Algorithm lines defining p_bar, h_bar); both divided by the batch size.
void masked_student_stats(const BatchPredictions& batch, Vector& p_bar, Vector& h_bar);

// Per-sample gradients w.r.t. student logits (CE terms) or probs (others);
// scaling by batch size and loss weights is the caller's business.

/// d/dlogits of H(onehot(label), softmax(logits)) = probs - onehot(label).
Vector ce_grad_logits(const Vector& probs, std::size_t label);

/// d/dQ of the per-sample OT term sum_k C(q_hat, k) Q(k).
Vector un3_grad_probs(const costs::CostMatrix& cost, std::size_t q_hat);

/// d/dp_bar of loss_un2 with h_bar and the state treated as constants.
Vector un2_grad_pbar(const Vector& p_bar, const Vector& h_bar,
                     const thresholds::ThresholdState& state);

/// Full per-sample logit gradient of the weighted total for one labeled
/// sample (already scaled by 1/B).
Vector labeled_grad_logits(const Vector& probs, std::size_t label, std::size_t batch_size);

/// Full per-sample logit gradient of the weighted total (w1 L_un1 + w2 L_un2
/// + lambda L_un3) for one unlabeled strong view; zero when masked out.
/// g2 is un2_grad_pbar for the batch.
Vector unlabeled_grad_logits(const Vector& student_probs, std::size_t hard_label, bool masked,
                             const Vector& g2, const costs::CostMatrix& cost,
                             const LossWeights& w, std::size_t unlabeled_batch_size);

}  // namespace otmatch::losses
