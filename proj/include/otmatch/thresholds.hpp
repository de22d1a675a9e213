#pragma once

#include <span>
#include <vector>

#include "otmatch/matrix.hpp"

namespace otmatch::thresholds {

/// EMA triple driving self-adaptive pseudo-label filtering: global threshold
/// tau, mean class-probability vector p_tilde, pseudo-label histogram h_tilde.
struct ThresholdState {
    double tau = 0.0;
    Vector p_tilde;
    Vector h_tilde;
    double momentum = 0.999;

    static ThresholdState init(std::size_t num_classes, double momentum = 0.999);
};

/// One EMA step from a batch of teacher probability vectors.
void update_state(ThresholdState& state, std::span<const Vector> teacher_probs);

/// tau(c) = MaxNorm(p_tilde)(c) * tau; the argmax class gets exactly tau.
Vector local_thresholds(const ThresholdState& state);

/// True iff max(q) strictly exceeds the local threshold of its argmax class.
bool mask(const Vector& q, const Vector& tau_per_class);

std::size_t argmax(const Vector& v);

}  // namespace otmatch::thresholds
