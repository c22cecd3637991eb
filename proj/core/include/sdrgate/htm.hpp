#pragma once

// Temporal-memory sequence predictor over depthwise SDR trajectories. One
// column per feature bit; depth plays the role of time and context is reset
// between samples. The anomaly at layer l is the fraction of active columns
// that were not predicted from layers < l.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdrgate/sdr.hpp"

namespace sdrgate {

struct TemporalMemoryConfig {
  std::size_t cells_per_column = 8;
  std::size_t activation_threshold = 7;  ///< connected active synapses for a prediction
  std::size_t min_threshold = 5;         ///< potential active synapses for a match
  std::size_t max_new_synapses = 10;     ///< synapses grown per learning step
  float initial_permanence = 0.21f;
  float connected_permanence = 0.5f;
  float permanence_increment = 0.1f;
  float permanence_decrement = 0.05f;
  float predicted_segment_decrement = 0.0f;
  std::size_t max_segments_per_cell = 255;
  std::size_t max_synapses_per_segment = 255;
  std::uint64_t seed = 0;

  /// Defaults scaled to a target sparsity: activation threshold
  /// max(1, floor(0.7 k)), min threshold max(1, floor(0.5 k)), k new synapses.
  static TemporalMemoryConfig for_sparsity(std::size_t k);

  friend bool operator==(const TemporalMemoryConfig&, const TemporalMemoryConfig&) = default;
};

void validate(const TemporalMemoryConfig& config);

using CellIndex = std::uint32_t;

struct TmSynapse {
  CellIndex presynaptic = 0;
  float permanence = 0.0f;
  friend bool operator==(const TmSynapse&, const TmSynapse&) = default;
};

/// A distal dendrite segment as stored or serialized.
struct TmSegment {
  CellIndex cell = 0;
  std::uint64_t last_used = 0;
  std::vector<TmSynapse> synapses;
  friend bool operator==(const TmSegment&, const TmSegment&) = default;
};

class TemporalMemory {
 public:
  TemporalMemory(std::size_t columns, TemporalMemoryConfig config);

  /// Rebuilds a model from serialized parts. `rng_state` is the textual
  /// engine state; an empty string reseeds from config.seed.
  static TemporalMemory restore(std::size_t columns, TemporalMemoryConfig config,
                                std::vector<TmSegment> segments, std::uint64_t iteration,
                                const std::string& rng_state);

  std::size_t columns() const noexcept { return columns_; }
  std::size_t cells() const noexcept { return columns_ * config_.cells_per_column; }
  const TemporalMemoryConfig& config() const noexcept { return config_; }
  std::uint64_t iteration() const noexcept { return iteration_; }
  std::string rng_state() const;

  /// Live segments in creation-slot order.
  std::vector<TmSegment> segments() const;
  std::size_t segment_count() const noexcept { return live_segments_; }
  std::size_t synapse_count() const noexcept;

  /// Clears sequence context; the next step has no predecessor.
  void reset();

  /// Feeds one layer. Returns the fraction of `active_columns` not predicted
  /// by the previous step (1 after a reset; NaN for an empty input).
  double compute(const ActiveSet& active_columns, bool learn);

  /// Read-only inference over a whole trajectory from a fresh context.
  AnomalyScore score(const SdrSequence& x) const;

  /// Same state (segments, iteration, RNG), ignoring sequence context.
  friend bool operator==(const TemporalMemory& a, const TemporalMemory& b);

 private:
  struct Segment {
    CellIndex cell = 0;
    std::uint64_t last_used = 0;
    std::vector<TmSynapse> synapses;
    bool alive = false;
  };
  using SegmentIndex = std::uint32_t;

  struct Activity {
    std::vector<SegmentIndex> active;    ///< sorted by (cell, index)
    std::vector<SegmentIndex> matching;  ///< sorted by (cell, index)
    std::vector<std::uint32_t> potential;  ///< per segment slot
  };

  Activity compute_activity(std::span<const CellIndex> active_cells) const;
  std::size_t column_of(CellIndex cell) const { return cell / config_.cells_per_column; }

  SegmentIndex create_segment(CellIndex cell);
  void destroy_segment(SegmentIndex seg);
  void destroy_synapse(SegmentIndex seg, std::size_t slot);
  bool connected(const TmSynapse& syn) const { return syn.permanence >= config_.connected_permanence; }
  void unlink_connected(CellIndex presynaptic, SegmentIndex seg);
  void adapt_segment(SegmentIndex seg, const std::vector<char>& prev_active_mask, float increment,
                     float decrement);
  void grow_synapses(SegmentIndex seg, std::size_t desired);
  CellIndex least_used_cell(std::size_t column);

  std::size_t columns_;
  TemporalMemoryConfig config_;
  std::vector<Segment> segments_;
  std::vector<SegmentIndex> free_slots_;
  std::vector<SegmentIndex> released_slots_;  ///< reusable after the current step
  std::size_t live_segments_ = 0;
  std::vector<std::vector<SegmentIndex>> cell_segments_;
  std::vector<std::vector<SegmentIndex>> presynaptic_index_;
  std::vector<std::vector<SegmentIndex>> connected_index_;  ///< subset with connected synapses
  std::uint64_t iteration_ = 0;
  std::mt19937_64 rng_;

  // Sequence context.
  std::vector<CellIndex> active_cells_;
  std::vector<CellIndex> winner_cells_;
  Activity activity_;
  bool has_context_ = false;
};

struct TemporalMemoryFit {
  TemporalMemory model;
  std::vector<double> epoch_train_anomaly;  ///< mean anomaly over layers 2..L per epoch
};

/// Trains on each sequence in corpus order for `epochs` passes, resetting
/// context between samples.
TemporalMemoryFit tm_fit(std::span<const SdrSequence> corpus, const TemporalMemoryConfig& config,
                         std::size_t epochs);

/// a_l = |A_l \ P_l| / |A_l|; does not modify the model.
AnomalyScore tm_score(const TemporalMemory& model, const SdrSequence& x);

}  // namespace sdrgate
