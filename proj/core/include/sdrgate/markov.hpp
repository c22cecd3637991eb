#pragma once

// First-order transition model over adjacent-layer active sets with
// Laplace smoothing:
//
//   p_l(j | i) = (C_l(i, j) + alpha) / (N_l(i) + alpha * D)
//
// where C_l(i, j) counts training samples with i active at layer l-1 and j
// active at layer l, and N_l(i) is the row sum. Only observed pairs are
// stored; everything else is derived from the marginals on demand.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdrgate/feature_labels.hpp"
#include "sdrgate/sdr.hpp"

namespace sdrgate {

/// Co-activation counts for one layer pair (layer-1 → layer) in CSR form.
/// Rows are sorted by source feature, columns by target feature.
struct LayerTransitions {
  int layer = 0;  ///< target layer l; sources live at l - 1
  std::vector<FeatureIndex> sources;
  std::vector<std::uint64_t> marginals;  ///< N_l(i), parallel to sources
  std::vector<std::size_t> row_offsets;  ///< sources.size() + 1 entries
  std::vector<FeatureIndex> targets;
  std::vector<std::uint64_t> counts;

  std::size_t row_of(FeatureIndex source) const;  ///< npos when unseen
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  friend bool operator==(const LayerTransitions&, const LayerTransitions&) = default;
};

class TransitionTable {
 public:
  /// Validates CSR structure, marginal consistency and the configuration.
  TransitionTable(std::size_t dim, double alpha, LayerRange range,
                  std::vector<LayerTransitions> pairs);

  std::size_t dim() const noexcept { return dim_; }
  double alpha() const noexcept { return alpha_; }
  LayerRange layer_range() const noexcept { return range_; }

  /// Counts for the pair (layer - 1 → layer).
  const LayerTransitions& transitions(int layer) const;
  const std::vector<LayerTransitions>& all_transitions() const noexcept { return pairs_; }

  std::uint64_t count(int layer, FeatureIndex source, FeatureIndex target) const;
  std::uint64_t marginal(int layer, FeatureIndex source) const;
  /// Smoothed p_l(target | source); 1/D for sources never observed.
  double probability(int layer, FeatureIndex source, FeatureIndex target) const;
  std::size_t stored_pairs() const noexcept;

  friend bool operator==(const TransitionTable&, const TransitionTable&) = default;

 private:
  std::size_t dim_;
  double alpha_;
  LayerRange range_;
  std::vector<LayerTransitions> pairs_;
};

/// Counts co-activations over the corpus. Samples are partitioned across
/// `threads` workers whose partial counts are merged; the result does not
/// depend on the thread count or sample order.
TransitionTable fit_markov(std::span<const SdrSequence> corpus, double alpha = 1.0,
                           unsigned threads = 1);

/// a_l = -mean_{i in A_{l-1}, j in A_l} log p_l(j | i), S(x) = mean_l a_l.
/// Layer pairs with an empty side are skipped and listed in skipped_layers.
AnomalyScore score(const TransitionTable& table, const SdrSequence& x);

struct TransitionContribution {
  int source_layer = 0;
  int target_layer = 0;
  FeatureIndex source = 0;
  FeatureIndex target = 0;
  double probability = 0.0;
  double contribution = 0.0;  ///< -log p
  std::optional<std::string> source_label;
  std::optional<std::string> target_label;
};

/// The `top_n` active pairs with the highest -log p, ties by
/// (target layer, source, target) ascending. Labels are attached when found.
std::vector<TransitionContribution> explain(const TransitionTable& table, const SdrSequence& x,
                                            std::size_t top_n,
                                            const LabelTable* labels = nullptr);

/// Elementwise count addition. All tables must share dim, alpha and range.
TransitionTable merge(std::span<const TransitionTable> tables);

}  // namespace sdrgate
