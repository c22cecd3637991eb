#pragma once

// Synthetic trajectories with planted domain structure. A domain has a
// preferred feature pool per layer and a transition map from each feature to
// a weighted set of next-layer features. Layer 1 draws k features from its
// pool; every later layer follows the map with probability 1 - noise and
// picks a uniform feature of [0, D) otherwise.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sdrgate/repr_pipeline.hpp"
#include "sdrgate/sdr.hpp"

namespace sdrgate {

struct WeightedSuccessor {
  FeatureIndex target = 0;
  double weight = 1.0;
};

/// Successor distribution per source feature for one layer pair.
using TransitionMap = std::map<FeatureIndex, std::vector<WeightedSuccessor>>;

struct SyntheticDomainSpec {
  std::size_t dim = 512;
  std::size_t layers = 6;
  std::size_t k = 10;
  int first_layer = 0;
  std::vector<std::vector<FeatureIndex>> pools;  ///< one per layer
  std::vector<TransitionMap> transitions;        ///< layers - 1 maps; [n] maps layer n to n + 1
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string domain = "synth";
  std::size_t background = 0;  ///< extra low-valued features in generate_features
};

/// Throws InvalidInput for pools smaller than k or outside [0, D), wrong map
/// counts, non-positive weights or noise outside [0, 1].
void validate(const SyntheticDomainSpec& spec);

/// n seeded samples. Sample i depends only on (seed, i). Every layer holds
/// exactly k features; when the map yields collisions the layer is topped up
/// from its pool (or uniformly, with probability noise).
std::vector<SdrSequence> generate(const SyntheticDomainSpec& spec, std::size_t n);

/// Same samples as pooled feature vectors: planted features get values in
/// [1, 2), spec.background further features get values in (0, 0.5].
/// Top-k binarization with k = spec.k recovers generate()'s active sets.
std::vector<FeatureTrajectory> generate_features(const SyntheticDomainSpec& spec, std::size_t n);

struct PlantedDomainOptions {
  std::size_t dim = 512;
  std::size_t layers = 6;
  std::size_t k = 10;
  FeatureIndex pool_offset = 0;  ///< every layer's pool is [offset, offset + size) mod D
  std::size_t pool_size = 64;
  std::size_t branching = 1;     ///< successors per feature; 1 gives a bijection of the pool
  double noise = 0.05;
  std::uint64_t map_seed = 0;    ///< two domains sharing pools differ only through this
  std::uint64_t seed = 0;        ///< sampling seed
  std::string domain = "synth";
};

/// Contiguous pools and a transition map built from `branching` seeded
/// permutations of the next pool, weighted uniformly.
SyntheticDomainSpec planted_domain(const PlantedDomainOptions& options);

}  // namespace sdrgate
