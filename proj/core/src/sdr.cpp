#include "sdrgate/sdr.hpp"

#include <algorithm>
#include <limits>

#include "sdrgate/error.hpp"

namespace sdrgate {

std::string to_string(const LayerRange& range) {
  return "[" + std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]";
}

std::vector<int> SdrSequence::underfilled_layers() const {
  std::vector<int> out;
  if (k == 0) return out;
  for (const auto& layer : layers) {
    if (layer.active.size() < k) out.push_back(layer.layer);
  }
  return out;
}

void validate(const SdrSequence& seq) {
  const auto fail = [&](const std::string& why) {
    throw InvalidInput("sample '" + seq.sample_id + "': " + why);
  };
  if (seq.dim == 0) fail("feature dimension is zero");
  if (seq.layers.empty()) fail("no layers");
  for (std::size_t n = 0; n < seq.layers.size(); ++n) {
    const auto& layer = seq.layers[n];
    if (n > 0 && layer.layer != seq.layers[n - 1].layer + 1) {
      fail("layer ids must be ascending and contiguous (got " +
           std::to_string(seq.layers[n - 1].layer) + " then " + std::to_string(layer.layer) + ")");
    }
    const auto& active = layer.active;
    if (!std::is_sorted(active.begin(), active.end()) ||
        std::adjacent_find(active.begin(), active.end()) != active.end()) {
      fail("active set at layer " + std::to_string(layer.layer) + " is not strictly ascending");
    }
    if (!active.empty() && active.back() >= seq.dim) {
      fail("feature " + std::to_string(active.back()) + " at layer " +
           std::to_string(layer.layer) + " outside [0, " + std::to_string(seq.dim) + ")");
    }
    if (seq.k > 0 && active.size() > seq.k) {
      fail("layer " + std::to_string(layer.layer) + " has " + std::to_string(active.size()) +
           " active features, more than k = " + std::to_string(seq.k));
    }
  }
}

LayerRange validate_corpus(std::span<const SdrSequence> corpus) {
  if (corpus.empty()) throw InvalidInput("empty corpus");
  validate(corpus.front());
  const LayerRange range = corpus.front().range();
  const std::size_t dim = corpus.front().dim;
  for (const auto& seq : corpus.subspan(1)) {
    validate(seq);
    if (seq.dim != dim) {
      throw InvalidInput("sample '" + seq.sample_id + "' has dim " + std::to_string(seq.dim) +
                         ", corpus has " + std::to_string(dim));
    }
    if (seq.range() != range) {
      throw InvalidInput("sample '" + seq.sample_id + "' spans layers " + to_string(seq.range()) +
                         ", corpus spans " + to_string(range));
    }
  }
  return range;
}

void finalize(AnomalyScore& score) {
  if (score.per_layer.empty()) {
    score.aggregate = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double sum = 0.0;
  for (const auto& a : score.per_layer) sum += a.value;
  score.aggregate = sum / static_cast<double>(score.per_layer.size());
}

}  // namespace sdrgate
