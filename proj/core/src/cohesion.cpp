#include "sdrgate/cohesion.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sdrgate/error.hpp"

namespace sdrgate {

double jaccard(const ActiveSet& a, const ActiveSet& b) {
  if (a.empty() && b.empty()) throw UndefinedScore("Jaccard similarity of two empty sets");
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

PairStatistics batch_jaccard_layer(std::span<const ActiveSet> sets, std::size_t dim) {
  const std::size_t n = sets.size();
  if (n < 2) throw InvalidInput("pairwise Jaccard needs at least 2 samples");

  using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t s = 0; s < n; ++s) {
    for (FeatureIndex f : sets[s]) {
      if (f >= dim) throw InvalidInput("feature index outside [0, dim)");
      entries.emplace_back(static_cast<int>(s), static_cast<int>(f), 1.0);
    }
  }
  SpMat B(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  B.setFromTriplets(entries.begin(), entries.end());
  const Eigen::MatrixXd gram = Eigen::MatrixXd(B * SpMat(B.transpose()));

  std::vector<double> values;
  values.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double inter = gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double uni = static_cast<double>(sets[i].size() + sets[j].size()) - inter;
      if (uni == 0.0) throw UndefinedScore("Jaccard similarity of two empty sets");
      values.push_back(inter / uni);
    }
  }
  PairStatistics out;
  out.pairs = values.size();
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(out.pairs);
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(out.pairs));
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_samples,
                                           std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max_samples) return idx;
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < max_samples; ++s) {
    const std::size_t pick = s + static_cast<std::size_t>(rng() % (n - s));
    std::swap(idx[s], idx[pick]);
  }
  idx.resize(max_samples);
  std::sort(idx.begin(), idx.end());
  return idx;
}

CohesionProfile cohesion_profile(std::span<const SdrSequence> dataset, std::size_t max_samples,
                                 std::uint64_t seed) {
  const LayerRange range = validate_corpus(dataset);
  const auto picked = subsample_indices(dataset.size(), max_samples, seed);
  CohesionProfile profile;
  profile.k = dataset.front().k;
  profile.samples = picked.size();
  for (int layer = range.lo; layer <= range.hi; ++layer) {
    std::vector<ActiveSet> sets;
    for (std::size_t s : picked) {
      sets.push_back(dataset[s].layers[static_cast<std::size_t>(layer - range.lo)].active);
    }
    const auto stats = batch_jaccard_layer(sets, dataset.front().dim);
    profile.pairs = stats.pairs;
    profile.layers.push_back({layer, stats.mean, stats.stddev});
  }
  return profile;
}

std::vector<CohesionProfile> depth_profile(std::span<const FeatureTrajectory> dataset,
                                           const DensityTable* table,
                                           std::span<const std::size_t> ks,
                                           std::span<const double> thetas,
                                           std::size_t max_samples, std::uint64_t seed) {
  if (dataset.empty()) throw InvalidInput("cohesion sweep needs a non-empty dataset");
  if (ks.empty() || thetas.empty()) throw InvalidInput("cohesion sweep needs k and theta values");
  const auto picked = subsample_indices(dataset.size(), max_samples, seed);
  std::vector<CohesionProfile> out;
  for (double theta : thetas) {
    for (std::size_t k : ks) {
      std::vector<SdrSequence> binarized;
      binarized.reserve(picked.size());
      for (std::size_t s : picked) {
        binarized.push_back(binarize_trajectory(dataset[s], table, theta, k));
      }
      CohesionProfile profile = cohesion_profile(binarized, max_samples, seed);
      profile.k = k;
      profile.theta = theta;
      out.push_back(std::move(profile));
    }
  }
  return out;
}

}  // namespace sdrgate
