#include "otmatch/losses.hpp"

#include <cmath>

#include "otmatch/ot.hpp"

namespace otmatch::losses {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }

}  // namespace

double loss_sup(std::span<const std::size_t> labels, std::span<const Vector> probs) {
    if (labels.size() != probs.size() || labels.empty())
        throw std::invalid_argument("loss_sup: bad batch");
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= probs[i].size())
            throw std::out_of_range("loss_sup: label out of range");
        total -= clamped_log(probs[i][labels[i]]);
    }
    return total / static_cast<double>(labels.size());
}

double loss_un1(const BatchPredictions& batch) {
    const std::size_t n = batch.student_probs.size();
    if (n == 0) throw std::invalid_argument("loss_un1: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!batch.masks[i]) continue;
        total -= clamped_log(batch.student_probs[i][batch.hard_labels[i]]);
    }
    return total / static_cast<double>(n);
}

void masked_student_stats(const BatchPredictions& batch, Vector& p_bar, Vector& h_bar) {
    const std::size_t n = batch.student_probs.size();
    const std::size_t k = batch.student_probs.empty() ? 0 : batch.student_probs[0].size();
    p_bar.assign(k, 0.0);
    h_bar.assign(k, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!batch.masks[i]) continue;
        const Vector& q = batch.student_probs[i];
        for (std::size_t c = 0; c < k; ++c) p_bar[c] += q[c] * inv_n;
        h_bar[thresholds::argmax(q)] += inv_n;
    }
}

namespace {

// SumNorm(p / (h + smoothing)); returns an all-zero vector when p is zero.
Vector normalized_ratio(const Vector& p, const Vector& h) {
    Vector r(p.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        r[i] = p[i] / (h[i] + kLogClamp);
        s += r[i];
    }
    if (s > 0.0)
        for (double& v : r) v /= s;
    return r;
}

}  // namespace

double loss_un2(const Vector& p_bar, const Vector& h_bar,
                const thresholds::ThresholdState& state) {
    double mass = 0.0;
    for (double v : p_bar) mass += v;
    if (mass <= 0.0) return 0.0;  // nothing masked in
    const Vector a = normalized_ratio(state.p_tilde, state.h_tilde);
    const Vector b = normalized_ratio(p_bar, h_bar);
    double l = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) l += a[i] * clamped_log(b[i]);
    return l;  // already -H(a, b)
}

double loss_un3(const BatchPredictions& batch, const costs::CostMatrix& cost) {
    const std::size_t n = batch.student_probs.size();
    if (n == 0) throw std::invalid_argument("loss_un3: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!batch.masks[i]) continue;
        total += ot::fast_dirac_ot(batch.hard_labels[i], batch.student_probs[i], cost.c);
    }
    return total / static_cast<double>(n);
}

double loss_total(double sup, double un1, double un2, double un3, const LossWeights& w) {
    return sup + w.w1 * un1 + w.w2 * un2 + w.lambda * un3;
}

Vector ce_grad_logits(const Vector& probs, std::size_t label) {
    Vector g = probs;
    g[label] -= 1.0;
    return g;
}

Vector un3_grad_probs(const costs::CostMatrix& cost, std::size_t q_hat) {
    Vector g(cost.num_classes());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = cost.c.at(q_hat, k);
    return g;
}

Vector un2_grad_pbar(const Vector& p_bar, const Vector& h_bar,
                     const thresholds::ThresholdState& state) {
    Vector g(p_bar.size(), 0.0);
    double mass = 0.0;
    for (double v : p_bar) mass += v;
    if (mass <= 0.0) return g;
    const Vector a = normalized_ratio(state.p_tilde, state.h_tilde);
    double s = 0.0;
    for (std::size_t i = 0; i < p_bar.size(); ++i) s += p_bar[i] / (h_bar[i] + kLogClamp);
    // terms where b_j sits below the log clamp are constant in the loss, so
    // they contribute nothing here and drop out of the normalization term
    const Vector b = normalized_ratio(p_bar, h_bar);
    double active_a = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (b[i] > kLogClamp) active_a += a[i];
    for (std::size_t j = 0; j < p_bar.size(); ++j) {
        if (b[j] > kLogClamp && p_bar[j] > 0.0) g[j] += a[j] / p_bar[j];
        g[j] -= active_a / (s * (h_bar[j] + kLogClamp));
    }
    return g;
}

Vector labeled_grad_logits(const Vector& probs, std::size_t label, std::size_t batch_size) {
    Vector g = ce_grad_logits(probs, label);
    const double inv_b = 1.0 / static_cast<double>(batch_size);
    for (double& v : g) v *= inv_b;
    return g;
}

Vector unlabeled_grad_logits(const Vector& student_probs, std::size_t hard_label, bool masked,
                             const Vector& g2, const costs::CostMatrix& cost,
                             const LossWeights& w, std::size_t unlabeled_batch_size) {
    const std::size_t k = student_probs.size();
    if (!masked) return Vector(k, 0.0);
    const double inv_ub = 1.0 / static_cast<double>(unlabeled_batch_size);
    Vector g = ce_grad_logits(student_probs, hard_label);
    for (double& v : g) v *= w.w1;
    Vector dprobs = un3_grad_probs(cost, hard_label);
    for (std::size_t c = 0; c < k; ++c)
        dprobs[c] = w.lambda * dprobs[c] + w.w2 * g2[c];
    const Vector g_soft = nn::softmax_backward(student_probs, dprobs);
    for (std::size_t c = 0; c < k; ++c) g[c] = (g[c] + g_soft[c]) * inv_ub;
    return g;
}

}  // namespace otmatch::losses
