#pragma once

// Within-domain consistency: pairwise Jaccard similarity of active sets per
// layer, computed in batch through the Gram product of the binary
// sample-by-feature matrix, plus Top-k and density-threshold sweeps.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdrgate/repr_pipeline.hpp"
#include "sdrgate/sdr.hpp"

namespace sdrgate {

/// |a ∩ b| / |a ∪ b| for sorted sets. Throws UndefinedScore if both are empty.
double jaccard(const ActiveSet& a, const ActiveSet& b);

struct PairStatistics {
  double mean = 0.0;
  double stddev = 0.0;  ///< population standard deviation over pairs
  std::size_t pairs = 0;
};

/// Mean and std of Jaccard over all unordered pairs i < j. Intersections
/// come from B B^T, unions from |A_i| + |A_j| - |A_i ∩ A_j|.
/// Throws InvalidInput for fewer than 2 sets.
PairStatistics batch_jaccard_layer(std::span<const ActiveSet> sets, std::size_t dim);

struct CohesionLayer {
  int layer = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct CohesionProfile {
  std::size_t k = 0;    ///< 0 when the input was already binarized
  double theta = 1.0;
  std::size_t samples = 0;
  std::size_t pairs = 0;
  std::vector<CohesionLayer> layers;
};

/// Seeded uniform subset of min(n, max_samples) indices, ascending.
std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_samples,
                                           std::uint64_t seed);

/// Profile of already-binarized trajectories (all sharing one layer range).
CohesionProfile cohesion_profile(std::span<const SdrSequence> dataset,
                                 std::size_t max_samples = 1000, std::uint64_t seed = 0);

/// One profile per (k, theta) sweep point over pooled feature trajectories.
/// A null density table disables masking (theta is then only echoed).
std::vector<CohesionProfile> depth_profile(std::span<const FeatureTrajectory> dataset,
                                           const DensityTable* table,
                                           std::span<const std::size_t> ks,
                                           std::span<const double> thetas,
                                           std::size_t max_samples = 1000,
                                           std::uint64_t seed = 0);

}  // namespace sdrgate
