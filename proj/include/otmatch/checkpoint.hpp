#pragma once

#include <string>

#include "otmatch/cost.hpp"
#include "otmatch/nn.hpp"
#include "otmatch/thresholds.hpp"

namespace otmatch::checkpoint {

/// Full resumable training state. Doubles are serialized as hex-encoded
/// IEEE-754 bit patterns so round-trips are exact, and the RNG stream state
/// is included so resumed runs reproduce subsequent metrics bitwise.
struct Checkpoint {
    std::uint32_t version = 1;
    std::size_t step = 0;
    nn::ModelParams model;
    nn::TeacherParams teacher;
    nn::OptimizerState opt;
    thresholds::ThresholdState thr;
    costs::CostMatrix cost;
    std::string rng_state;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Atomic write: temp file then rename.
void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

}  // namespace otmatch::checkpoint
