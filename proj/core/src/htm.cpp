#include "sdrgate/htm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

constexpr float kPermanenceEpsilon = 1e-6f;

bool in_unit_interval(float v) { return v >= 0.0f && v <= 1.0f; }

}  // namespace

TemporalMemoryConfig TemporalMemoryConfig::for_sparsity(std::size_t k) {
  TemporalMemoryConfig config;
  config.activation_threshold = std::max<std::size_t>(1, (7 * k) / 10);
  config.min_threshold = std::max<std::size_t>(1, k / 2);
  config.max_new_synapses = std::max<std::size_t>(1, k);
  return config;
}

void validate(const TemporalMemoryConfig& config) {
  if (config.cells_per_column == 0) throw InvalidInput("cells_per_column must be >= 1");
  if (config.activation_threshold == 0) throw InvalidInput("activation_threshold must be >= 1");
  if (config.min_threshold == 0) throw InvalidInput("min_threshold must be >= 1");
  if (config.max_new_synapses == 0) throw InvalidInput("max_new_synapses must be >= 1");
  if (config.max_segments_per_cell == 0 || config.max_synapses_per_segment == 0) {
    throw InvalidInput("segment and synapse limits must be >= 1");
  }
  if (!in_unit_interval(config.initial_permanence) ||
      !in_unit_interval(config.connected_permanence) ||
      !in_unit_interval(config.permanence_increment) ||
      !in_unit_interval(config.permanence_decrement) ||
      !in_unit_interval(config.predicted_segment_decrement)) {
    throw InvalidInput("permanence parameters must lie in [0, 1]");
  }
}

TemporalMemory::TemporalMemory(std::size_t columns, TemporalMemoryConfig config)
    : columns_(columns), config_(config), rng_(config.seed) {
  validate(config_);
  if (columns_ == 0) throw InvalidInput("temporal memory needs at least one column");
  if (cells() > std::numeric_limits<CellIndex>::max()) {
    throw InvalidInput("too many cells for 32-bit cell indices");
  }
  cell_segments_.resize(cells());
  presynaptic_index_.resize(cells());
  connected_index_.resize(cells());
}

TemporalMemory TemporalMemory::restore(std::size_t columns, TemporalMemoryConfig config,
                                       std::vector<TmSegment> segments, std::uint64_t iteration,
                                       const std::string& rng_state) {
  TemporalMemory tm(columns, config);
  tm.iteration_ = iteration;
  if (!rng_state.empty()) {
    std::istringstream in(rng_state);
    in >> tm.rng_;
    if (!in) throw InvalidInput("malformed temporal memory RNG state");
  }
  for (auto& s : segments) {
    if (s.cell >= tm.cells()) throw InvalidInput("segment cell index out of range");
    if (s.synapses.size() > config.max_synapses_per_segment) {
      throw InvalidInput("segment exceeds max_synapses_per_segment");
    }
    const SegmentIndex seg = tm.create_segment(s.cell);
    auto& dst = tm.segments_[seg];
    dst.last_used = s.last_used;
    for (const auto& syn : s.synapses) {
      if (syn.presynaptic >= tm.cells() ||
          !(syn.permanence >= kPermanenceEpsilon && syn.permanence <= 1.0f)) {
        throw InvalidInput("synapse out of range");
      }
      for (const auto& existing : dst.synapses) {
        if (existing.presynaptic == syn.presynaptic) {
          throw InvalidInput("segment has two synapses from the same cell");
        }
      }
      dst.synapses.push_back(syn);
      tm.presynaptic_index_[syn.presynaptic].push_back(seg);
      if (tm.connected(syn)) tm.connected_index_[syn.presynaptic].push_back(seg);
    }
  }
  return tm;
}

std::string TemporalMemory::rng_state() const {
  std::ostringstream out;
  out << rng_;
  return out.str();
}

std::vector<TmSegment> TemporalMemory::segments() const {
  std::vector<TmSegment> out;
  out.reserve(live_segments_);
  for (const auto& s : segments_) {
    if (s.alive) out.push_back({s.cell, s.last_used, s.synapses});
  }
  return out;
}

std::size_t TemporalMemory::synapse_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : segments_) {
    if (s.alive) n += s.synapses.size();
  }
  return n;
}

bool operator==(const TemporalMemory& a, const TemporalMemory& b) {
  return a.columns_ == b.columns_ && a.config_ == b.config_ && a.iteration_ == b.iteration_ &&
         a.rng_ == b.rng_ && a.segments() == b.segments();
}

void TemporalMemory::reset() {
  active_cells_.clear();
  winner_cells_.clear();
  activity_ = Activity{};
  has_context_ = false;
}

TemporalMemory::Activity TemporalMemory::compute_activity(
    std::span<const CellIndex> active_cells) const {
  Activity act;
  act.potential.assign(segments_.size(), 0);
  std::vector<std::uint32_t> connected_count(segments_.size(), 0);
  std::vector<SegmentIndex> touched;
  for (CellIndex cell : active_cells) {
    for (SegmentIndex seg : presynaptic_index_[cell]) {
      if (act.potential[seg]++ == 0) touched.push_back(seg);
    }
    for (SegmentIndex seg : connected_index_[cell]) ++connected_count[seg];
  }
  const auto by_cell = [this](SegmentIndex a, SegmentIndex b) {
    return segments_[a].cell != segments_[b].cell ? segments_[a].cell < segments_[b].cell : a < b;
  };
  for (SegmentIndex seg : touched) {
    if (connected_count[seg] >= config_.activation_threshold) act.active.push_back(seg);
    if (act.potential[seg] >= config_.min_threshold) act.matching.push_back(seg);
  }
  std::sort(act.active.begin(), act.active.end(), by_cell);
  std::sort(act.matching.begin(), act.matching.end(), by_cell);
  return act;
}

TemporalMemory::SegmentIndex TemporalMemory::create_segment(CellIndex cell) {
  auto& owned = cell_segments_[cell];
  while (owned.size() >= config_.max_segments_per_cell) {
    auto lru = std::min_element(owned.begin(), owned.end(), [this](SegmentIndex a, SegmentIndex b) {
      return segments_[a].last_used != segments_[b].last_used
                 ? segments_[a].last_used < segments_[b].last_used
                 : a < b;
    });
    destroy_segment(*lru);
  }
  SegmentIndex seg;
  if (!free_slots_.empty()) {
    seg = free_slots_.back();
    free_slots_.pop_back();
  } else {
    seg = static_cast<SegmentIndex>(segments_.size());
    segments_.emplace_back();
  }
  auto& s = segments_[seg];
  s.cell = cell;
  s.last_used = iteration_;
  s.synapses.clear();
  s.alive = true;
  cell_segments_[cell].push_back(seg);
  ++live_segments_;
  return seg;
}

void TemporalMemory::destroy_segment(SegmentIndex seg) {
  auto& s = segments_[seg];
  for (const auto& syn : s.synapses) {
    auto& idx = presynaptic_index_[syn.presynaptic];
    idx.erase(std::find(idx.begin(), idx.end(), seg));
    if (connected(syn)) unlink_connected(syn.presynaptic, seg);
  }
  s.synapses.clear();
  auto& owned = cell_segments_[s.cell];
  owned.erase(std::find(owned.begin(), owned.end(), seg));
  s.alive = false;
  released_slots_.push_back(seg);
  --live_segments_;
}

void TemporalMemory::destroy_synapse(SegmentIndex seg, std::size_t slot) {
  auto& synapses = segments_[seg].synapses;
  auto& idx = presynaptic_index_[synapses[slot].presynaptic];
  idx.erase(std::find(idx.begin(), idx.end(), seg));
  if (connected(synapses[slot])) unlink_connected(synapses[slot].presynaptic, seg);
  synapses.erase(synapses.begin() + static_cast<std::ptrdiff_t>(slot));
}

void TemporalMemory::unlink_connected(CellIndex presynaptic, SegmentIndex seg) {
  auto& idx = connected_index_[presynaptic];
  idx.erase(std::find(idx.begin(), idx.end(), seg));
}

void TemporalMemory::adapt_segment(SegmentIndex seg, const std::vector<char>& prev_active_mask,
                                   float increment, float decrement) {
  auto& synapses = segments_[seg].synapses;
  for (std::size_t n = 0; n < synapses.size();) {
    auto& syn = synapses[n];
    const bool was_connected = connected(syn);
    if (prev_active_mask[syn.presynaptic]) {
      syn.permanence = std::min(1.0f, syn.permanence + increment);
    } else {
      syn.permanence = std::max(0.0f, syn.permanence - decrement);
    }
    if (connected(syn) != was_connected) {
      if (was_connected) {
        unlink_connected(syn.presynaptic, seg);
      } else {
        connected_index_[syn.presynaptic].push_back(seg);
      }
    }
    if (syn.permanence < kPermanenceEpsilon) {
      destroy_synapse(seg, n);
    } else {
      ++n;
    }
  }
  segments_[seg].last_used = iteration_;
  if (synapses.empty()) destroy_segment(seg);
}

void TemporalMemory::grow_synapses(SegmentIndex seg, std::size_t desired) {
  auto& synapses = segments_[seg].synapses;
  std::vector<CellIndex> candidates;
  for (CellIndex cell : winner_cells_) {
    const bool present = std::any_of(synapses.begin(), synapses.end(),
                                     [cell](const TmSynapse& s) { return s.presynaptic == cell; });
    if (!present) candidates.push_back(cell);
  }
  std::size_t n = std::min(desired, candidates.size());
  if (n == 0) return;

  // Make room by dropping the weakest synapses.
  const std::size_t limit = config_.max_synapses_per_segment;
  n = std::min(n, limit);
  while (synapses.size() + n > limit) {
    std::size_t weakest = 0;
    for (std::size_t s = 1; s < synapses.size(); ++s) {
      if (synapses[s].permanence < synapses[weakest].permanence) weakest = s;
    }
    destroy_synapse(seg, weakest);
  }

  // Partial Fisher-Yates draw of n candidates.
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t pick = s + static_cast<std::size_t>(rng_() % (candidates.size() - s));
    std::swap(candidates[s], candidates[pick]);
    synapses.push_back({candidates[s], config_.initial_permanence});
    presynaptic_index_[candidates[s]].push_back(seg);
    if (connected(synapses.back())) connected_index_[candidates[s]].push_back(seg);
  }
}

CellIndex TemporalMemory::least_used_cell(std::size_t column) {
  const std::size_t first = column * config_.cells_per_column;
  std::size_t fewest = std::numeric_limits<std::size_t>::max();
  std::vector<CellIndex> ties;
  for (std::size_t c = first; c < first + config_.cells_per_column; ++c) {
    const std::size_t used = cell_segments_[c].size();
    if (used < fewest) {
      fewest = used;
      ties.clear();
    }
    if (used == fewest) ties.push_back(static_cast<CellIndex>(c));
  }
  return ties[static_cast<std::size_t>(rng_() % ties.size())];
}

double TemporalMemory::compute(const ActiveSet& active_columns, bool learn) {
  for (FeatureIndex col : active_columns) {
    if (col >= columns_) {
      throw InvalidInput("column " + std::to_string(col) + " outside [0, " +
                         std::to_string(columns_) + ")");
    }
  }

  // Anomaly against predictions made from the previous step.
  double anomaly = std::numeric_limits<double>::quiet_NaN();
  if (!active_columns.empty()) {
    std::vector<char> predicted(columns_, 0);
    for (SegmentIndex seg : activity_.active) predicted[column_of(segments_[seg].cell)] = 1;
    std::size_t missed = 0;
    for (FeatureIndex col : active_columns) missed += predicted[col] ? 0 : 1;
    anomaly = static_cast<double>(missed) / static_cast<double>(active_columns.size());
  }

  std::vector<char> prev_active_mask(cells(), 0);
  for (CellIndex c : active_cells_) prev_active_mask[c] = 1;

  // Segments are grouped by column for the walk below; both lists are
  // already sorted by cell and therefore by column.
  const Activity prev = activity_;
  std::vector<CellIndex> new_active;
  std::vector<CellIndex> new_winners;
  std::vector<char> column_active(columns_, 0);
  for (FeatureIndex col : active_columns) column_active[col] = 1;

  auto active_it = prev.active.begin();
  auto matching_it = prev.matching.begin();
  const auto segment_column = [this](SegmentIndex seg) { return column_of(segments_[seg].cell); };

  for (FeatureIndex col : active_columns) {
    while (active_it != prev.active.end() && segment_column(*active_it) < col) ++active_it;
    while (matching_it != prev.matching.end() && segment_column(*matching_it) < col) ++matching_it;
    auto active_end = active_it;
    while (active_end != prev.active.end() && segment_column(*active_end) == col) ++active_end;
    auto matching_end = matching_it;
    while (matching_end != prev.matching.end() && segment_column(*matching_end) == col) {
      ++matching_end;
    }

    if (active_it != active_end) {
      // Predicted column: only cells with active segments fire.
      std::vector<SegmentIndex> learning(active_it, active_end);
      for (SegmentIndex seg : learning) {
        const CellIndex cell = segments_[seg].cell;
        if (new_active.empty() || new_active.back() != cell) {
          new_active.push_back(cell);
          new_winners.push_back(cell);
        }
      }
      if (learn) {
        for (SegmentIndex seg : learning) {
          const std::uint32_t potential = prev.potential[seg];
          adapt_segment(seg, prev_active_mask, config_.permanence_increment,
                        config_.permanence_decrement);
          if (segments_[seg].alive && config_.max_new_synapses > potential) {
            grow_synapses(seg, config_.max_new_synapses - potential);
          }
        }
      }
    } else {
      // Bursting column.
      const std::size_t first = col * config_.cells_per_column;
      for (std::size_t c = first; c < first + config_.cells_per_column; ++c) {
        new_active.push_back(static_cast<CellIndex>(c));
      }
      if (matching_it != matching_end) {
        SegmentIndex best = *matching_it;
        for (auto it = matching_it; it != matching_end; ++it) {
          if (prev.potential[*it] > prev.potential[best]) best = *it;
        }
        new_winners.push_back(segments_[best].cell);
        if (learn) {
          const std::uint32_t potential = prev.potential[best];
          adapt_segment(best, prev_active_mask, config_.permanence_increment,
                        config_.permanence_decrement);
          if (segments_[best].alive && config_.max_new_synapses > potential) {
            grow_synapses(best, config_.max_new_synapses - potential);
          }
        }
      } else {
        const CellIndex winner = learn ? least_used_cell(col)
                                       : static_cast<CellIndex>(first);
        new_winners.push_back(winner);
        if (learn && !winner_cells_.empty()) {
          const SegmentIndex seg = create_segment(winner);
          grow_synapses(seg, std::min(config_.max_new_synapses, winner_cells_.size()));
        }
      }
    }
    active_it = active_end;
    matching_it = matching_end;
  }

  if (learn && config_.predicted_segment_decrement > 0.0f) {
    for (SegmentIndex seg : prev.matching) {
      if (!segments_[seg].alive || column_active[column_of(segments_[seg].cell)]) continue;
      adapt_segment(seg, prev_active_mask, -config_.predicted_segment_decrement, 0.0f);
    }
  }

  std::sort(new_active.begin(), new_active.end());
  new_active.erase(std::unique(new_active.begin(), new_active.end()), new_active.end());
  std::sort(new_winners.begin(), new_winners.end());
  active_cells_ = std::move(new_active);
  winner_cells_ = std::move(new_winners);
  activity_ = compute_activity(active_cells_);
  has_context_ = true;
  free_slots_.insert(free_slots_.end(), released_slots_.begin(), released_slots_.end());
  released_slots_.clear();
  if (learn) ++iteration_;
  return anomaly;
}

AnomalyScore TemporalMemory::score(const SdrSequence& x) const {
  validate(x);
  if (x.layers.size() < 2) {
    throw InvalidInput("sample '" + x.sample_id + "' has " + std::to_string(x.layers.size()) +
                       " layer(s); scoring needs at least 2");
  }
  if (x.dim != columns_) {
    throw InvalidInput("sample '" + x.sample_id + "' has dim " + std::to_string(x.dim) +
                       ", model has " + std::to_string(columns_) + " columns");
  }
  AnomalyScore out;
  out.sample_id = x.sample_id;
  std::vector<CellIndex> active_cells;
  Activity activity;
  for (std::size_t n = 0; n < x.layers.size(); ++n) {
    const auto& columns = x.layers[n].active;
    std::vector<char> predicted_cell(cells(), 0);
    std::vector<char> predicted_column(columns_, 0);
    for (SegmentIndex seg : activity.active) {
      predicted_cell[segments_[seg].cell] = 1;
      predicted_column[column_of(segments_[seg].cell)] = 1;
    }
    if (n > 0) {
      if (columns.empty()) {
        out.skipped_layers.push_back(x.layers[n].layer);
      } else {
        std::size_t missed = 0;
        for (FeatureIndex col : columns) missed += predicted_column[col] ? 0 : 1;
        out.per_layer.push_back(
            {x.layers[n].layer, static_cast<double>(missed) / static_cast<double>(columns.size())});
      }
    }
    std::vector<CellIndex> next;
    for (FeatureIndex col : columns) {
      const std::size_t first = col * config_.cells_per_column;
      const bool hit = predicted_column[col] != 0;
      for (std::size_t c = first; c < first + config_.cells_per_column; ++c) {
        if (!hit || predicted_cell[c]) next.push_back(static_cast<CellIndex>(c));
      }
    }
    active_cells = std::move(next);
    activity = compute_activity(active_cells);
  }
  finalize(out);
  return out;
}

TemporalMemoryFit tm_fit(std::span<const SdrSequence> corpus, const TemporalMemoryConfig& config,
                         std::size_t epochs) {
  validate_corpus(corpus);
  TemporalMemoryFit fit{TemporalMemory(corpus.front().dim, config), {}};
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& seq : corpus) {
      fit.model.reset();
      for (std::size_t l = 0; l < seq.layers.size(); ++l) {
        const double a = fit.model.compute(seq.layers[l].active, true);
        if (l > 0 && !std::isnan(a)) {
          sum += a;
          ++n;
        }
      }
    }
    fit.model.reset();
    fit.epoch_train_anomaly.push_back(n ? sum / static_cast<double>(n)
                                        : std::numeric_limits<double>::quiet_NaN());
  }
  return fit;
}

AnomalyScore tm_score(const TemporalMemory& model, const SdrSequence& x) { return model.score(x); }

}  // namespace sdrgate
