#include "sdrgate/markov.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <unordered_map>
#include <utility>

#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

using PairKey = std::uint64_t;

PairKey pack(FeatureIndex i, FeatureIndex j) {
  return (static_cast<PairKey>(i) << 32) | static_cast<PairKey>(j);
}
FeatureIndex source_of(PairKey key) { return static_cast<FeatureIndex>(key >> 32); }
FeatureIndex target_of(PairKey key) { return static_cast<FeatureIndex>(key & 0xffffffffu); }

using PairCounts = std::unordered_map<PairKey, std::uint64_t>;

/// Builds CSR storage from (pair, count) entries sorted by key.
LayerTransitions to_csr(int layer, const std::vector<std::pair<PairKey, std::uint64_t>>& sorted) {
  LayerTransitions out;
  out.layer = layer;
  out.row_offsets.push_back(0);
  for (const auto& [key, count] : sorted) {
    const FeatureIndex i = source_of(key);
    if (out.sources.empty() || out.sources.back() != i) {
      if (!out.sources.empty()) out.row_offsets.push_back(out.targets.size());
      out.sources.push_back(i);
      out.marginals.push_back(0);
    }
    out.targets.push_back(target_of(key));
    out.counts.push_back(count);
    out.marginals.back() += count;
  }
  if (!out.sources.empty()) out.row_offsets.push_back(out.targets.size());
  return out;
}

LayerTransitions finalize_counts(int layer, const PairCounts& counts) {
  std::vector<std::pair<PairKey, std::uint64_t>> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  return to_csr(layer, sorted);
}

void accumulate(std::vector<PairCounts>& per_layer, const SdrSequence& seq) {
  for (std::size_t n = 1; n < seq.layers.size(); ++n) {
    auto& counts = per_layer[n - 1];
    for (FeatureIndex i : seq.layers[n - 1].active) {
      for (FeatureIndex j : seq.layers[n].active) ++counts[pack(i, j)];
    }
  }
}

void check_scoreable(const TransitionTable& table, const SdrSequence& x) {
  validate(x);
  if (x.layers.size() < 2) {
    throw InvalidInput("sample '" + x.sample_id + "' has " + std::to_string(x.layers.size()) +
                       " layer(s); scoring needs at least 2");
  }
  if (x.dim != table.dim()) {
    throw InvalidInput("sample '" + x.sample_id + "' has dim " + std::to_string(x.dim) +
                       ", model has " + std::to_string(table.dim()));
  }
  if (!table.layer_range().contains(x.range())) {
    throw InvalidInput("sample '" + x.sample_id + "' spans layers " + to_string(x.range()) +
                       " outside the model range " + to_string(table.layer_range()));
  }
}

}  // namespace

std::size_t LayerTransitions::row_of(FeatureIndex source) const {
  auto it = std::lower_bound(sources.begin(), sources.end(), source);
  if (it == sources.end() || *it != source) return npos;
  return static_cast<std::size_t>(it - sources.begin());
}

TransitionTable::TransitionTable(std::size_t dim, double alpha, LayerRange range,
                                 std::vector<LayerTransitions> pairs)
    : dim_(dim), alpha_(alpha), range_(range), pairs_(std::move(pairs)) {
  if (dim_ == 0) throw InvalidInput("transition table needs dim > 0");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) {
    throw InvalidInput("smoothing constant alpha must be positive and finite");
  }
  if (range_.width() < 2) {
    throw InvalidInput("transition table needs a layer range of width >= 2, got " +
                       to_string(range_));
  }
  if (pairs_.size() != static_cast<std::size_t>(range_.width() - 1)) {
    throw InvalidInput("transition table for range " + to_string(range_) + " needs " +
                       std::to_string(range_.width() - 1) + " layer pairs, got " +
                       std::to_string(pairs_.size()));
  }
  for (std::size_t n = 0; n < pairs_.size(); ++n) {
    const auto& lt = pairs_[n];
    const std::string where = " (layer pair ending at " + std::to_string(lt.layer) + ")";
    if (lt.layer != range_.lo + 1 + static_cast<int>(n)) {
      throw InvalidInput("layer pairs must cover the range in ascending order" + where);
    }
    if (lt.marginals.size() != lt.sources.size() ||
        lt.row_offsets.size() != (lt.sources.empty() ? 0 : lt.sources.size() + 1) ||
        lt.counts.size() != lt.targets.size()) {
      throw InvalidInput("inconsistent CSR array sizes" + where);
    }
    if (!lt.sources.empty() &&
        (lt.row_offsets.front() != 0 || lt.row_offsets.back() != lt.targets.size())) {
      throw InvalidInput("row offsets do not span the entries" + where);
    }
    for (std::size_t r = 0; r < lt.sources.size(); ++r) {
      if (lt.sources[r] >= dim_ || (r > 0 && lt.sources[r] <= lt.sources[r - 1])) {
        throw InvalidInput("source features must be ascending and < dim" + where);
      }
      const std::size_t b = lt.row_offsets[r];
      const std::size_t e = lt.row_offsets[r + 1];
      if (e < b) throw InvalidInput("row offsets must be non-decreasing" + where);
      std::uint64_t sum = 0;
      for (std::size_t c = b; c < e; ++c) {
        if (lt.targets[c] >= dim_ || (c > b && lt.targets[c] <= lt.targets[c - 1])) {
          throw InvalidInput("target features must be ascending and < dim" + where);
        }
        sum += lt.counts[c];
      }
      if (sum != lt.marginals[r]) {
        throw InvalidInput("marginal of source " + std::to_string(lt.sources[r]) +
                           " does not equal its row sum" + where);
      }
    }
  }
}

const LayerTransitions& TransitionTable::transitions(int layer) const {
  if (layer <= range_.lo || layer > range_.hi) {
    throw InvalidInput("layer " + std::to_string(layer) + " has no incoming transitions in range " +
                       to_string(range_));
  }
  return pairs_[static_cast<std::size_t>(layer - range_.lo - 1)];
}

std::uint64_t TransitionTable::count(int layer, FeatureIndex source, FeatureIndex target) const {
  const auto& lt = transitions(layer);
  const std::size_t row = lt.row_of(source);
  if (row == LayerTransitions::npos) return 0;
  const auto first = lt.targets.begin() + static_cast<std::ptrdiff_t>(lt.row_offsets[row]);
  const auto last = lt.targets.begin() + static_cast<std::ptrdiff_t>(lt.row_offsets[row + 1]);
  auto it = std::lower_bound(first, last, target);
  if (it == last || *it != target) return 0;
  return lt.counts[static_cast<std::size_t>(it - lt.targets.begin())];
}

std::uint64_t TransitionTable::marginal(int layer, FeatureIndex source) const {
  const auto& lt = transitions(layer);
  const std::size_t row = lt.row_of(source);
  return row == LayerTransitions::npos ? 0 : lt.marginals[row];
}

double TransitionTable::probability(int layer, FeatureIndex source, FeatureIndex target) const {
  if (source >= dim_ || target >= dim_) {
    throw InvalidInput("feature index outside [0, " + std::to_string(dim_) + ")");
  }
  const double numer = static_cast<double>(count(layer, source, target)) + alpha_;
  const double denom =
      static_cast<double>(marginal(layer, source)) + alpha_ * static_cast<double>(dim_);
  return numer / denom;
}

std::size_t TransitionTable::stored_pairs() const noexcept {
  std::size_t total = 0;
  for (const auto& lt : pairs_) total += lt.targets.size();
  return total;
}

TransitionTable fit_markov(std::span<const SdrSequence> corpus, double alpha, unsigned threads) {
  const LayerRange range = validate_corpus(corpus);
  if (range.width() < 2) {
    throw InvalidInput("training sequences need at least 2 layers, got range " + to_string(range));
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidInput("smoothing constant alpha must be positive and finite");
  }
  const auto n_pairs = static_cast<std::size_t>(range.width() - 1);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(corpus.size())));

  std::vector<std::vector<PairCounts>> partial(threads, std::vector<PairCounts>(n_pairs));
  const std::size_t chunk = (corpus.size() + threads - 1) / threads;
  const auto work = [&](unsigned w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(corpus.size(), begin + chunk);
    for (std::size_t s = begin; s < end; ++s) accumulate(partial[w], corpus[s]);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }

  std::vector<LayerTransitions> pairs;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    PairCounts& total = partial[0][p];
    for (unsigned w = 1; w < threads; ++w) {
      for (const auto& [key, count] : partial[w][p]) total[key] += count;
    }
    pairs.push_back(finalize_counts(range.lo + 1 + static_cast<int>(p), total));
  }
  return TransitionTable(corpus.front().dim, alpha, range, std::move(pairs));
}

AnomalyScore score(const TransitionTable& table, const SdrSequence& x) {
  check_scoreable(table, x);
  AnomalyScore out;
  out.sample_id = x.sample_id;
  const double alpha = table.alpha();
  const double alpha_dim = alpha * static_cast<double>(table.dim());

  for (std::size_t n = 1; n < x.layers.size(); ++n) {
    const auto& prev = x.layers[n - 1].active;
    const auto& cur = x.layers[n].active;
    const int layer = x.layers[n].layer;
    if (prev.empty() || cur.empty()) {
      out.skipped_layers.push_back(layer);
      continue;
    }
    const auto& lt = table.transitions(layer);
    double log_sum = 0.0;
    for (FeatureIndex i : prev) {
      const std::size_t row = lt.row_of(i);
      if (row == LayerTransitions::npos) {
        log_sum += static_cast<double>(cur.size()) * std::log(alpha / alpha_dim);
        continue;
      }
      const double denom = static_cast<double>(lt.marginals[row]) + alpha_dim;
      std::size_t c = lt.row_offsets[row];
      const std::size_t end = lt.row_offsets[row + 1];
      for (FeatureIndex j : cur) {
        while (c < end && lt.targets[c] < j) ++c;
        const double count = (c < end && lt.targets[c] == j) ? static_cast<double>(lt.counts[c]) : 0.0;
        log_sum += std::log((count + alpha) / denom);
      }
    }
    const double pairs = static_cast<double>(prev.size()) * static_cast<double>(cur.size());
    out.per_layer.push_back({layer, -log_sum / pairs});
  }
  finalize(out);
  return out;
}

std::vector<TransitionContribution> explain(const TransitionTable& table, const SdrSequence& x,
                                            std::size_t top_n, const LabelTable* labels) {
  check_scoreable(table, x);
  std::vector<TransitionContribution> all;
  for (std::size_t n = 1; n < x.layers.size(); ++n) {
    const auto& prev = x.layers[n - 1];
    const auto& cur = x.layers[n];
    for (FeatureIndex i : prev.active) {
      for (FeatureIndex j : cur.active) {
        TransitionContribution c;
        c.source_layer = prev.layer;
        c.target_layer = cur.layer;
        c.source = i;
        c.target = j;
        c.probability = table.probability(cur.layer, i, j);
        c.contribution = -std::log(c.probability);
        all.push_back(std::move(c));
      }
    }
  }
  const auto ranking = [](const TransitionContribution& a, const TransitionContribution& b) {
    if (a.contribution != b.contribution) return a.contribution > b.contribution;
    if (a.target_layer != b.target_layer) return a.target_layer < b.target_layer;
    if (a.source != b.source) return a.source < b.source;
    return a.target < b.target;
  };
  const std::size_t keep = std::min(top_n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    ranking);
  all.resize(keep);
  if (labels) {
    for (auto& c : all) {
      c.source_label = labels->find(c.source_layer, c.source);
      c.target_label = labels->find(c.target_layer, c.target);
    }
  }
  return all;
}

TransitionTable merge(std::span<const TransitionTable> tables) {
  if (tables.empty()) throw InvalidInput("merge needs at least one transition table");
  const auto& first = tables.front();
  for (const auto& t : tables.subspan(1)) {
    if (t.dim() != first.dim() || t.alpha() != first.alpha() ||
        t.layer_range() != first.layer_range()) {
      throw InvalidInput("cannot merge transition tables with different dim, alpha or layer range");
    }
  }
  std::vector<LayerTransitions> pairs;
  for (std::size_t p = 0; p < first.all_transitions().size(); ++p) {
    std::vector<std::pair<PairKey, std::uint64_t>> entries;
    for (const auto& t : tables) {
      const auto& lt = t.all_transitions()[p];
      for (std::size_t r = 0; r < lt.sources.size(); ++r) {
        for (std::size_t c = lt.row_offsets[r]; c < lt.row_offsets[r + 1]; ++c) {
          entries.emplace_back(pack(lt.sources[r], lt.targets[c]), lt.counts[c]);
        }
      }
    }
    std::sort(entries.begin(), entries.end());
    std::vector<std::pair<PairKey, std::uint64_t>> summed;
    for (const auto& [key, count] : entries) {
      if (!summed.empty() && summed.back().first == key) {
        summed.back().second += count;
      } else {
        summed.emplace_back(key, count);
      }
    }
    pairs.push_back(to_csr(first.all_transitions()[p].layer, summed));
  }
  return TransitionTable(first.dim(), first.alpha(), first.layer_range(), std::move(pairs));
}

}  // namespace sdrgate
