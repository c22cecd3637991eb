#pragma once

// Explicit registry of N-hop feature tuples observed in in-domain
// trajectories, and the registry typicality score of a test trajectory.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "sdrgate/sdr.hpp"

namespace sdrgate {

enum class RegistryNormalization {
  Induced,   ///< |T ∩ V| / |T|
  Registry,  ///< |T ∩ V| / |V|
};

/// Tuples (u_0, ..., u_N) with u_i active at layer l + i in some training
/// sample, stored per start layer l as packed mixed-radix integers.
class TupleRegistry {
 public:
  TupleRegistry(std::size_t hop, std::size_t dim, LayerRange range);

  std::size_t hop() const noexcept { return hop_; }
  std::size_t dim() const noexcept { return dim_; }
  LayerRange layer_range() const noexcept { return range_; }
  /// Start layers l with l + N <= range.hi.
  std::vector<int> start_layers() const;

  /// Inserts one tuple of hop() + 1 features starting at `start_layer`.
  void insert(int start_layer, std::span<const FeatureIndex> tuple);
  bool contains(int start_layer, std::span<const FeatureIndex> tuple) const;
  std::size_t size(int start_layer) const;
  /// Every stored tuple for a start layer, sorted lexicographically.
  std::vector<std::vector<FeatureIndex>> tuples(int start_layer) const;

  std::uint64_t pack(std::span<const FeatureIndex> tuple) const;

  /// Set union with a compatible registry.
  void merge(const TupleRegistry& other);

 private:
  const std::unordered_set<std::uint64_t>& layer_set(int start_layer) const;

  std::size_t hop_;
  std::size_t dim_;
  LayerRange range_;
  std::vector<std::unordered_set<std::uint64_t>> sets_;
};

/// Builds V_{l,N} for every start layer. Throws InvalidInput naming the
/// sample when a sequence spans fewer than N + 1 layers.
TupleRegistry build_registry(std::span<const SdrSequence> corpus, std::size_t hop);

/// Fraction of induced tuples T = A_l x ... x A_{l+H} present in the
/// registry. Throws UndefinedScore for |V| = 0 in Registry mode and
/// DegenerateInput when an active set in the window is empty.
double trajectory_score(const TupleRegistry& registry, const SdrSequence& x, int start_layer,
                        std::size_t hop, RegistryNormalization mode = RegistryNormalization::Induced);

/// Detection score: per start layer a_l = 1 - trajectory_score, aggregate is
/// their mean. Degenerate windows are skipped and flagged.
AnomalyScore registry_anomaly(const TupleRegistry& registry, const SdrSequence& x,
                              RegistryNormalization mode = RegistryNormalization::Induced);

struct ProfileRow {
  int start_layer = 0;
  std::size_t hop = 0;
  double mean = 0.0;
  double stddev = 0.0;  ///< population standard deviation
  std::size_t samples = 0;
};

/// Per (start layer, hop) mean and std of trajectory_score across `dataset`.
/// Cells where the hop does not fit below the last layer are omitted.
std::vector<ProfileRow> layerwise_profile(std::span<const TupleRegistry> registries,
                                          std::span<const SdrSequence> dataset,
                                          RegistryNormalization mode = RegistryNormalization::Induced);

}  // namespace sdrgate
