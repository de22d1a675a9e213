#include "otmatch/thresholds.hpp"

#include <algorithm>
#include <stdexcept>

namespace otmatch::thresholds {

std::size_t argmax(const Vector& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ThresholdState ThresholdState::init(std::size_t num_classes, double momentum) {
    if (num_classes < 2) throw std::invalid_argument("ThresholdState: K must be >= 2");
    ThresholdState s;
    const double u = 1.0 / static_cast<double>(num_classes);
    s.tau = u;
    s.p_tilde.assign(num_classes, u);
    s.h_tilde.assign(num_classes, u);
    s.momentum = momentum;
    return s;
}

void update_state(ThresholdState& state, std::span<const Vector> teacher_probs) {
    if (teacher_probs.empty()) throw std::invalid_argument("update_state: empty batch");
    const std::size_t k = state.p_tilde.size();
    const double inv_b = 1.0 / static_cast<double>(teacher_probs.size());

    double mean_max = 0.0;
    Vector mean_p(k, 0.0);
    Vector hist(k, 0.0);
    for (const Vector& q : teacher_probs) {
        if (q.size() != k) throw DimensionError("update_state: prob size mismatch");
        const std::size_t am = argmax(q);
        mean_max += q[am];
        hist[am] += 1.0;
        for (std::size_t c = 0; c < k; ++c) mean_p[c] += q[c];
    }
    mean_max *= inv_b;
    for (std::size_t c = 0; c < k; ++c) {
        mean_p[c] *= inv_b;
        hist[c] *= inv_b;
    }

    const double m = state.momentum;
    state.tau = m * state.tau + (1.0 - m) * mean_max;
    for (std::size_t c = 0; c < k; ++c) {
        state.p_tilde[c] = m * state.p_tilde[c] + (1.0 - m) * mean_p[c];
        state.h_tilde[c] = m * state.h_tilde[c] + (1.0 - m) * hist[c];
    }
}

Vector local_thresholds(const ThresholdState& state) {
    const double pmax = *std::max_element(state.p_tilde.begin(), state.p_tilde.end());
    if (pmax <= 0.0)
        throw std::runtime_error("local_thresholds: degenerate all-zero p_tilde");
    Vector tau(state.p_tilde.size());
    for (std::size_t c = 0; c < tau.size(); ++c)
        tau[c] = state.p_tilde[c] / pmax * state.tau;
    return tau;
}

bool mask(const Vector& q, const Vector& tau_per_class) {
    const std::size_t am = argmax(q);
    return q[am] > tau_per_class[am];
}

}  // namespace otmatch::thresholds
