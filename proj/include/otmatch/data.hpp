#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "otmatch/matrix.hpp"

namespace otmatch::data {

struct Example {
    Vector x;
    int label = -1;  // -1 = unlabeled
};

struct Dataset {
    std::vector<Example> examples;
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    // image datasets keep their spatial shape for augmentation; 0 for vectors
    std::size_t image_rows = 0;
    std::size_t image_cols = 0;

    bool is_image() const { return image_rows > 0; }
};

/// Two interleaved half-circles with additive Gaussian noise; balanced labels.
Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed);

/// K isotropic Gaussians with means on the unit circle (2-D).
Dataset gen_gaussian_mixture(std::size_t n, std::size_t num_classes, double sigma,
                             std::uint64_t seed);

struct IdxFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads a standard IDX ubyte file (big-endian magic + dims + raw payload)
/// into [0,1]-normalized vectors, one per leading-dimension slice.
Dataset read_idx(const std::string& path);

/// Writes vectors scaled back to bytes in IDX format (round-trip counterpart
/// of read_idx for rank-3 image files).
void write_idx(const std::string& path, const Dataset& ds);

struct AugmentConfig {
    double weak_noise = 0.1;
    double strong_noise_factor = 3.0;  // strong sigma = factor * weak
    double strong_mask_fraction = 0.2;
    // image-specific knobs
    int shift_max = 2;
    double cutout_fraction = 0.25;
    double brightness_jitter = 0.2;
};

Vector augment_weak(const Vector& x, const Dataset& ds, const AugmentConfig& cfg,
                    std::mt19937_64& rng);
Vector augment_strong(const Vector& x, const Dataset& ds, const AugmentConfig& cfg,
                      std::mt19937_64& rng);

struct UnlabeledPair {
    Vector weak;
    Vector strong;
};

struct MixedBatch {
    std::vector<Vector> labeled_weak;
    std::vector<std::size_t> labels;
    std::vector<UnlabeledPair> unlabeled;
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Class-balanced labeled part (B/K per class) plus mu*B unlabeled pairs drawn
/// uniformly without replacement within the batch.
MixedBatch sample_batch(const Dataset& ds, const std::vector<std::size_t>& labeled_idx,
                        const std::vector<std::size_t>& unlabeled_idx, std::size_t batch,
                        std::size_t mu, const AugmentConfig& cfg, std::mt19937_64& rng);

/// CSV dump (x..., y) of a synthetic dataset for inspection.
void write_dataset_csv(const Dataset& ds, const std::string& path);

}  // namespace otmatch::data
