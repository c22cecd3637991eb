#include "sdrgate/registry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

/// Visits every tuple of A_l x ... x A_{l+H}, lexicographic in the set order.
template <typename Visit>
void for_each_tuple(const SdrSequence& x, std::size_t first, std::size_t hop, Visit&& visit) {
  std::vector<std::size_t> pos(hop + 1, 0);
  std::vector<FeatureIndex> tuple(hop + 1);
  for (std::size_t i = 0; i <= hop; ++i) {
    if (x.layers[first + i].active.empty()) return;
    tuple[i] = x.layers[first + i].active[0];
  }
  while (true) {
    visit(std::span<const FeatureIndex>(tuple));
    std::size_t i = hop + 1;
    while (i-- > 0) {
      const auto& set = x.layers[first + i].active;
      if (++pos[i] < set.size()) {
        tuple[i] = set[pos[i]];
        break;
      }
      pos[i] = 0;
      tuple[i] = set[0];
      if (i == 0) return;
    }
  }
}

std::size_t layer_position(const SdrSequence& x, int layer) {
  return static_cast<std::size_t>(layer - x.first_layer());
}

}  // namespace

TupleRegistry::TupleRegistry(std::size_t hop, std::size_t dim, LayerRange range)
    : hop_(hop), dim_(dim), range_(range) {
  if (dim_ == 0) throw InvalidInput("registry needs dim > 0");
  if (range_.hi < range_.lo || static_cast<std::size_t>(range_.width()) < hop_ + 1) {
    throw InvalidInput("layer range " + to_string(range_) + " too short for hop length " +
                       std::to_string(hop_));
  }
  long double capacity = 1.0L;
  for (std::size_t i = 0; i <= hop_; ++i) capacity *= static_cast<long double>(dim_);
  if (capacity > static_cast<long double>(std::numeric_limits<std::uint64_t>::max())) {
    throw InvalidInput("dim^(hop+1) exceeds the 64-bit tuple key space");
  }
  sets_.resize(static_cast<std::size_t>(range_.width()) - hop_);
}

std::vector<int> TupleRegistry::start_layers() const {
  std::vector<int> out;
  for (std::size_t n = 0; n < sets_.size(); ++n) out.push_back(range_.lo + static_cast<int>(n));
  return out;
}

std::uint64_t TupleRegistry::pack(std::span<const FeatureIndex> tuple) const {
  if (tuple.size() != hop_ + 1) {
    throw InvalidInput("tuple has " + std::to_string(tuple.size()) + " components, expected " +
                       std::to_string(hop_ + 1));
  }
  std::uint64_t key = 0;
  for (std::size_t i = tuple.size(); i-- > 0;) {
    if (tuple[i] >= dim_) throw InvalidInput("tuple component outside [0, dim)");
    key = key * dim_ + tuple[i];
  }
  return key;
}

const std::unordered_set<std::uint64_t>& TupleRegistry::layer_set(int start_layer) const {
  if (start_layer < range_.lo || start_layer >= range_.lo + static_cast<int>(sets_.size())) {
    throw InvalidInput("start layer " + std::to_string(start_layer) + " with hop " +
                       std::to_string(hop_) + " is outside the registry range " +
                       to_string(range_));
  }
  return sets_[static_cast<std::size_t>(start_layer - range_.lo)];
}

void TupleRegistry::insert(int start_layer, std::span<const FeatureIndex> tuple) {
  layer_set(start_layer);
  sets_[static_cast<std::size_t>(start_layer - range_.lo)].insert(pack(tuple));
}

bool TupleRegistry::contains(int start_layer, std::span<const FeatureIndex> tuple) const {
  return layer_set(start_layer).count(pack(tuple)) != 0;
}

std::size_t TupleRegistry::size(int start_layer) const { return layer_set(start_layer).size(); }

std::vector<std::vector<FeatureIndex>> TupleRegistry::tuples(int start_layer) const {
  std::vector<std::vector<FeatureIndex>> out;
  for (std::uint64_t key : layer_set(start_layer)) {
    std::vector<FeatureIndex> t(hop_ + 1);
    for (std::size_t i = 0; i <= hop_; ++i) {
      t[i] = static_cast<FeatureIndex>(key % dim_);
      key /= dim_;
    }
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void TupleRegistry::merge(const TupleRegistry& other) {
  if (other.hop_ != hop_ || other.dim_ != dim_ || other.range_ != range_) {
    throw InvalidInput("cannot merge registries with different hop, dim or range");
  }
  for (std::size_t n = 0; n < sets_.size(); ++n) sets_[n].insert(other.sets_[n].begin(), other.sets_[n].end());
}

TupleRegistry build_registry(std::span<const SdrSequence> corpus, std::size_t hop) {
  if (corpus.empty()) throw InvalidInput("empty corpus");
  for (const auto& x : corpus) {
    if (!x.layers.empty() && x.layers.size() < hop + 1) {
      throw InvalidInput("sample '" + x.sample_id + "' spans " + std::to_string(x.layers.size()) +
                         " layer(s); hop " + std::to_string(hop) + " needs " +
                         std::to_string(hop + 1));
    }
  }
  const LayerRange range = validate_corpus(corpus);
  TupleRegistry registry(hop, corpus.front().dim, range);
  for (const auto& x : corpus) {
    for (int l : registry.start_layers()) {
      for_each_tuple(x, layer_position(x, l), hop,
                     [&](std::span<const FeatureIndex> t) { registry.insert(l, t); });
    }
  }
  return registry;
}

double trajectory_score(const TupleRegistry& registry, const SdrSequence& x, int start_layer,
                        std::size_t hop, RegistryNormalization mode) {
  validate(x);
  if (hop != registry.hop()) {
    throw InvalidInput("hop length " + std::to_string(hop) + " does not match the registry's " +
                       std::to_string(registry.hop()));
  }
  if (x.dim != registry.dim()) {
    throw InvalidInput("sample '" + x.sample_id + "' has dim " + std::to_string(x.dim) +
                       ", registry has " + std::to_string(registry.dim()));
  }
  if (start_layer < x.first_layer() || start_layer + static_cast<int>(hop) > x.last_layer()) {
    throw InvalidInput("sample '" + x.sample_id + "' does not span layers " +
                       std::to_string(start_layer) + ".." +
                       std::to_string(start_layer + static_cast<int>(hop)));
  }
  const std::size_t first = layer_position(x, start_layer);
  std::size_t induced = 1;
  for (std::size_t i = 0; i <= hop; ++i) {
    const auto& set = x.layers[first + i].active;
    if (set.empty()) {
      throw DegenerateInput("empty active set in trajectory window", x.layers[first + i].layer,
                            x.sample_id);
    }
    induced *= set.size();
  }
  const std::size_t registered = registry.size(start_layer);
  if (mode == RegistryNormalization::Registry && registered == 0) {
    throw UndefinedScore("registry for start layer " + std::to_string(start_layer) +
                         " is empty; registry-normalized score undefined");
  }
  std::size_t hits = 0;
  for_each_tuple(x, first, hop, [&](std::span<const FeatureIndex> t) {
    hits += registry.contains(start_layer, t) ? 1 : 0;
  });
  const double denom = mode == RegistryNormalization::Induced ? static_cast<double>(induced)
                                                              : static_cast<double>(registered);
  return static_cast<double>(hits) / denom;
}

AnomalyScore registry_anomaly(const TupleRegistry& registry, const SdrSequence& x,
                              RegistryNormalization mode) {
  validate(x);
  AnomalyScore out;
  out.sample_id = x.sample_id;
  for (int l : registry.start_layers()) {
    if (l < x.first_layer() || l + static_cast<int>(registry.hop()) > x.last_layer()) continue;
    try {
      out.per_layer.push_back({l, 1.0 - trajectory_score(registry, x, l, registry.hop(), mode)});
    } catch (const DegenerateInput&) {
      out.skipped_layers.push_back(l);
    } catch (const UndefinedScore&) {
      out.skipped_layers.push_back(l);
    }
  }
  finalize(out);
  return out;
}

std::vector<ProfileRow> layerwise_profile(std::span<const TupleRegistry> registries,
                                          std::span<const SdrSequence> dataset,
                                          RegistryNormalization mode) {
  if (dataset.empty()) throw InvalidInput("layerwise profile needs a non-empty dataset");
  const LayerRange range = validate_corpus(dataset);
  std::vector<ProfileRow> rows;
  for (const auto& registry : registries) {
    if (registry.layer_range() != range) {
      throw InvalidInput("registry range " + to_string(registry.layer_range()) +
                         " differs from dataset range " + to_string(range));
    }
    for (int l : registry.start_layers()) {
      std::vector<double> scores;
      for (const auto& x : dataset) {
        try {
          scores.push_back(trajectory_score(registry, x, l, registry.hop(), mode));
        } catch (const DegenerateInput&) {
        } catch (const UndefinedScore&) {
        }
      }
      if (scores.empty()) continue;
      double mean = 0.0;
      for (double s : scores) mean += s;
      mean /= static_cast<double>(scores.size());
      double var = 0.0;
      for (double s : scores) var += (s - mean) * (s - mean);
      var /= static_cast<double>(scores.size());
      rows.push_back({l, registry.hop(), mean, std::sqrt(var), scores.size()});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ProfileRow& a, const ProfileRow& b) {
    return a.start_layer != b.start_layer ? a.start_layer < b.start_layer : a.hop < b.hop;
  });
  return rows;
}

}  // namespace sdrgate
