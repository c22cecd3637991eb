#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sdrgate/sdr.hpp"

namespace sdrgate::testing {

inline SdrSequence make_seq(std::string id, std::size_t dim, std::vector<ActiveSet> sets,
                            int first_layer = 1, std::size_t k = 0) {
  SdrSequence s;
  s.sample_id = std::move(id);
  s.dim = dim;
  s.k = k;
  for (std::size_t n = 0; n < sets.size(); ++n) {
    s.layers.push_back({first_layer + static_cast<int>(n), std::move(sets[n])});
  }
  return s;
}

/// Uniform random subset of [0, dim) with `size` elements, sorted.
inline ActiveSet random_set(std::mt19937_64& rng, std::size_t dim, std::size_t size) {
  std::vector<FeatureIndex> all(dim);
  for (std::size_t i = 0; i < dim; ++i) all[i] = static_cast<FeatureIndex>(i);
  std::shuffle(all.begin(), all.end(), rng);
  ActiveSet out(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
  std::sort(out.begin(), out.end());
  return out;
}

/// n sequences over `layers` layers with set sizes drawn from [1, max_size].
inline std::vector<SdrSequence> random_corpus(std::mt19937_64& rng, std::size_t n,
                                              std::size_t dim, std::size_t layers,
                                              std::size_t max_size, const std::string& prefix = "s") {
  std::uniform_int_distribution<std::size_t> size(1, std::min(max_size, dim));
  std::vector<SdrSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<ActiveSet> sets;
    for (std::size_t l = 0; l < layers; ++l) sets.push_back(random_set(rng, dim, size(rng)));
    out.push_back(make_seq(prefix + std::to_string(i), dim, std::move(sets)));
  }
  return out;
}

}  // namespace sdrgate::testing
