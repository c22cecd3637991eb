#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sdrgate {

using FeatureIndex = std::uint32_t;

/// Sorted, duplicate-free feature indices active at one layer.
using ActiveSet = std::vector<FeatureIndex>;

/// Inclusive, contiguous range of layer ids.
struct LayerRange {
  int lo = 0;
  int hi = 0;

  int width() const noexcept { return hi - lo + 1; }
  bool contains(int layer) const noexcept { return layer >= lo && layer <= hi; }
  bool contains(const LayerRange& other) const noexcept {
    return other.lo >= lo && other.hi <= hi;
  }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

std::string to_string(const LayerRange& range);

struct SdrLayer {
  int layer = 0;
  ActiveSet active;
  friend bool operator==(const SdrLayer&, const SdrLayer&) = default;
};

/// Depthwise trajectory of k-sparse active sets for one input.
struct SdrSequence {
  std::string sample_id;
  std::vector<SdrLayer> layers;
  std::size_t k = 0;    ///< target sparsity; 0 when unknown
  std::size_t dim = 0;  ///< feature space size D
  std::optional<std::string> label;
  std::optional<std::string> domain;

  int first_layer() const { return layers.front().layer; }
  int last_layer() const { return layers.back().layer; }
  LayerRange range() const { return {first_layer(), last_layer()}; }

  /// Layer ids whose active set holds fewer than k features.
  std::vector<int> underfilled_layers() const;

  friend bool operator==(const SdrSequence&, const SdrSequence&) = default;
};

/// Throws InvalidInput unless layer ids are ascending and contiguous, every
/// active set is sorted, duplicate-free and inside [0, dim), and no set
/// exceeds k (when k is known). Empty sets are allowed here; scorers flag them.
void validate(const SdrSequence& seq);

/// Checks that all sequences are valid and share dim and layer range.
/// Returns the shared range. Throws InvalidInput on an empty corpus.
LayerRange validate_corpus(std::span<const SdrSequence> corpus);

struct LayerAnomaly {
  int layer = 0;
  double value = 0.0;
  friend bool operator==(const LayerAnomaly&, const LayerAnomaly&) = default;
};

/// Per-layer anomalies a_l for l = 2..L and their mean S(x). Layers that
/// could not be scored (empty active sets) are listed in `skipped_layers`
/// and excluded from the mean. `aggregate` is NaN when nothing was scored.
struct AnomalyScore {
  std::string sample_id;
  std::vector<LayerAnomaly> per_layer;
  std::vector<int> skipped_layers;
  double aggregate = 0.0;

  bool degenerate() const noexcept { return !skipped_layers.empty(); }
  bool scored() const noexcept { return !per_layer.empty(); }
};

/// Sets `aggregate` to the arithmetic mean of `per_layer` (NaN if empty).
void finalize(AnomalyScore& score);

}  // namespace sdrgate
