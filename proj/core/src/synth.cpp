#include "sdrgate/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t index, std::uint64_t salt) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index * 2 + salt)));
}

double unit(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

FeatureIndex uniform_feature(std::mt19937_64& rng, std::size_t dim) {
  return static_cast<FeatureIndex>(std::uniform_int_distribution<std::size_t>(0, dim - 1)(rng));
}

FeatureIndex pick(std::mt19937_64& rng, const std::vector<FeatureIndex>& pool) {
  return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
}

/// Cumulative successor weights per source, built once per generate call.
struct CompiledMap {
  std::map<FeatureIndex, std::pair<std::vector<FeatureIndex>, std::vector<double>>> rows;

  explicit CompiledMap(const TransitionMap& map) {
    for (const auto& [src, succ] : map) {
      auto& [targets, cum] = rows[src];
      double total = 0.0;
      for (const auto& s : succ) {
        total += s.weight;
        targets.push_back(s.target);
        cum.push_back(total);
      }
      for (double& c : cum) c /= total;
    }
  }

  /// False when the source has no map entry.
  bool draw(FeatureIndex src, std::mt19937_64& rng, FeatureIndex& out) const {
    auto it = rows.find(src);
    if (it == rows.end()) return false;
    const auto& [targets, cum] = it->second;
    double u = unit(rng);
    std::size_t i = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    out = targets[std::min(i, targets.size() - 1)];
    return true;
  }
};

SdrSequence generate_one(const SyntheticDomainSpec& spec, const std::vector<CompiledMap>& maps,
                         std::size_t index) {
  auto rng = sample_rng(spec.seed, index, 0);
  SdrSequence seq;
  seq.sample_id = spec.domain + "-" + std::to_string(index);
  seq.k = spec.k;
  seq.dim = spec.dim;
  seq.label = spec.domain;
  seq.domain = spec.domain;

  // Layer 1: k distinct pool features (partial Fisher-Yates).
  std::vector<FeatureIndex> pool = spec.pools[0];
  for (std::size_t i = 0; i < spec.k; ++i) {
    std::size_t j = std::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng);
    std::swap(pool[i], pool[j]);
  }
  ActiveSet first(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.k));
  std::sort(first.begin(), first.end());
  seq.layers.push_back({spec.first_layer, std::move(first)});

  for (std::size_t n = 1; n < spec.layers; ++n) {
    const auto& prev = seq.layers.back().active;
    const auto& next_pool = spec.pools[n];
    std::unordered_set<FeatureIndex> chosen;
    for (FeatureIndex src : prev) {
      FeatureIndex f = 0;
      if (unit(rng) < spec.noise) {
        f = uniform_feature(rng, spec.dim);
      } else if (!maps[n - 1].draw(src, rng, f)) {
        f = pick(rng, next_pool);
      }
      chosen.insert(f);
    }
    // Top up collisions; bounded so a tiny pool cannot stall.
    for (std::size_t attempt = 0; chosen.size() < spec.k && attempt < 64 * spec.k; ++attempt) {
      chosen.insert(unit(rng) < spec.noise ? uniform_feature(rng, spec.dim) : pick(rng, next_pool));
    }
    for (FeatureIndex f = 0; chosen.size() < spec.k; ++f) chosen.insert(f);
    ActiveSet active(chosen.begin(), chosen.end());
    std::sort(active.begin(), active.end());
    seq.layers.push_back({spec.first_layer + static_cast<int>(n), std::move(active)});
  }
  return seq;
}

}  // namespace

void validate(const SyntheticDomainSpec& spec) {
  if (spec.dim == 0 || spec.layers == 0 || spec.k == 0) {
    throw InvalidInput("synthetic spec needs dim, layers and k >= 1");
  }
  if (spec.k > spec.dim) throw InvalidInput("k exceeds dim");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) throw InvalidInput("noise must be in [0, 1]");
  if (spec.pools.size() != spec.layers) {
    throw InvalidInput("need one pool per layer, got " + std::to_string(spec.pools.size()));
  }
  for (std::size_t n = 0; n < spec.pools.size(); ++n) {
    const auto& pool = spec.pools[n];
    std::unordered_set<FeatureIndex> seen;
    for (FeatureIndex f : pool) {
      if (f >= spec.dim) throw InvalidInput("pool feature outside [0, dim)");
      if (!seen.insert(f).second) throw InvalidInput("pool has a duplicate feature");
    }
    if (pool.size() < spec.k) {
      throw InvalidInput("pool for layer " + std::to_string(n) + " holds " +
                         std::to_string(pool.size()) + " features, fewer than k = " +
                         std::to_string(spec.k));
    }
  }
  if (spec.transitions.size() + 1 != spec.layers) {
    throw InvalidInput("need layers - 1 transition maps, got " +
                       std::to_string(spec.transitions.size()));
  }
  for (const auto& map : spec.transitions) {
    for (const auto& [src, succ] : map) {
      if (src >= spec.dim) throw InvalidInput("transition source outside [0, dim)");
      if (succ.empty()) throw InvalidInput("transition row without successors");
      for (const auto& s : succ) {
        if (s.target >= spec.dim) throw InvalidInput("transition target outside [0, dim)");
        if (!(s.weight > 0.0) || !std::isfinite(s.weight)) {
          throw InvalidInput("transition weights must be positive and finite");
        }
      }
    }
  }
  if (spec.background > spec.dim - spec.k) throw InvalidInput("background exceeds dim - k");
}

std::vector<SdrSequence> generate(const SyntheticDomainSpec& spec, std::size_t n) {
  validate(spec);
  if (n == 0) throw InvalidInput("generate needs n >= 1");
  std::vector<CompiledMap> maps;
  maps.reserve(spec.transitions.size());
  for (const auto& m : spec.transitions) maps.emplace_back(m);
  std::vector<SdrSequence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(spec, maps, i));
  return out;
}

std::vector<FeatureTrajectory> generate_features(const SyntheticDomainSpec& spec, std::size_t n) {
  auto seqs = generate(spec, n);
  std::vector<FeatureTrajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto rng = sample_rng(spec.seed, i, 1);
    const auto& s = seqs[i];
    FeatureTrajectory t{s.sample_id, s.label, s.domain, s.dim, {}};
    for (const auto& layer : s.layers) {
      std::map<FeatureIndex, double> values;
      for (FeatureIndex f : layer.active) values[f] = 1.0 + unit(rng);
      while (values.size() < layer.active.size() + spec.background) {
        FeatureIndex f = uniform_feature(rng, spec.dim);
        if (!values.count(f)) values[f] = 0.5 * (1.0 - unit(rng));
      }
      SparseFeatureVector v{layer.layer, spec.dim, {}};
      for (const auto& [f, x] : values) v.entries.push_back({f, x});
      t.layers.push_back(std::move(v));
    }
    out.push_back(std::move(t));
  }
  return out;
}

SyntheticDomainSpec planted_domain(const PlantedDomainOptions& o) {
  if (o.pool_size == 0 || o.pool_size > o.dim) throw InvalidInput("pool_size must be in [1, dim]");
  if (o.branching == 0 || o.branching > o.pool_size) {
    throw InvalidInput("branching must be in [1, pool_size]");
  }
  SyntheticDomainSpec spec;
  spec.dim = o.dim;
  spec.layers = o.layers;
  spec.k = o.k;
  spec.noise = o.noise;
  spec.seed = o.seed;
  spec.domain = o.domain;

  std::vector<FeatureIndex> pool(o.pool_size);
  for (std::size_t i = 0; i < o.pool_size; ++i) {
    pool[i] = static_cast<FeatureIndex>((o.pool_offset + i) % o.dim);
  }
  spec.pools.assign(o.layers, pool);

  std::mt19937_64 rng(splitmix64(o.map_seed));
  for (std::size_t n = 0; n + 1 < o.layers; ++n) {
    TransitionMap map;
    for (std::size_t b = 0; b < o.branching; ++b) {
      std::vector<FeatureIndex> perm = pool;
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < pool.size(); ++i) {
        auto& row = map[pool[i]];
        bool dup = std::any_of(row.begin(), row.end(),
                               [&](const WeightedSuccessor& s) { return s.target == perm[i]; });
        if (!dup) row.push_back({perm[i], 1.0});
      }
    }
    spec.transitions.push_back(std::move(map));
  }
  return spec;
}

}  // namespace sdrgate
