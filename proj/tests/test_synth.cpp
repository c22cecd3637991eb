#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "sdrgate/error.hpp"
#include "sdrgate/markov.hpp"
#include "sdrgate/metrics.hpp"
#include "sdrgate/repr_pipeline.hpp"
#include "sdrgate/synth.hpp"

using namespace sdrgate;

namespace {

std::vector<double> aggregates(const TransitionTable& t, const std::vector<SdrSequence>& xs) {
  std::vector<double> out;
  for (const auto& x : xs) out.push_back(score(t, x).aggregate);
  return out;
}

}  // namespace

TEST(Synth, Reproducible) {
  PlantedDomainOptions o;
  o.seed = 4;
  auto spec = planted_domain(o);
  auto a = generate(spec, 20);
  auto b = generate(spec, 20);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sample_id, "synth-" + std::to_string(i));
    EXPECT_EQ(a[i].layers, b[i].layers);
  }
  // Sample i depends only on (seed, i).
  auto c = generate(spec, 5);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(a[i].layers, c[i].layers);
  spec.seed = 5;
  EXPECT_NE(generate(spec, 1)[0].layers, a[0].layers);
}

TEST(Synth, Invariants) {
  PlantedDomainOptions o;
  o.dim = 128;
  o.layers = 5;
  o.k = 8;
  o.pool_size = 20;
  o.noise = 0.3;
  auto spec = planted_domain(o);
  spec.first_layer = 3;
  for (const auto& x : generate(spec, 100)) {
    EXPECT_NO_THROW(validate(x));
    ASSERT_EQ(x.layers.size(), 5u);
    EXPECT_EQ(x.layers.front().layer, 3);
    for (const auto& l : x.layers) {
      EXPECT_EQ(l.active.size(), 8u);
      EXPECT_TRUE(std::is_sorted(l.active.begin(), l.active.end()));
      EXPECT_LT(l.active.back(), 128u);
    }
    for (FeatureIndex f : x.layers.front().active) EXPECT_LT(f, 20u);
  }
}

TEST(Synth, NoiselessSamplesFollowTheMap) {
  PlantedDomainOptions o;
  o.dim = 64;
  o.k = 6;
  o.pool_size = 16;
  o.noise = 0.0;
  o.map_seed = 3;
  auto spec = planted_domain(o);
  for (const auto& x : generate(spec, 50)) {
    for (std::size_t n = 1; n < x.layers.size(); ++n) {
      std::set<FeatureIndex> expected;
      for (FeatureIndex src : x.layers[n - 1].active) {
        const auto& row = spec.transitions[n - 1].at(src);
        ASSERT_EQ(row.size(), 1u);
        expected.insert(row[0].target);
      }
      EXPECT_EQ(ActiveSet(expected.begin(), expected.end()), x.layers[n].active);
    }
  }
}

TEST(Synth, UniformNoiseIsIndistinguishable) {
  PlantedDomainOptions o;
  o.noise = 1.0;
  o.map_seed = 1;
  o.seed = 1;
  auto train = generate(planted_domain(o), 500);
  o.seed = 2;
  auto id = generate(planted_domain(o), 500);
  o.map_seed = 2;
  o.seed = 3;
  o.domain = "other";
  auto ood = generate(planted_domain(o), 500);
  auto table = fit_markov(train);
  double a = auroc(aggregates(table, id), aggregates(table, ood));
  EXPECT_NEAR(a, 0.5, 0.05);
}

TEST(Synth, DisjointPoolsSeparate) {
  PlantedDomainOptions o;
  o.seed = 1;
  auto train = generate(planted_domain(o), 500);
  o.seed = 2;
  auto id = generate(planted_domain(o), 500);
  o.pool_offset = 256;
  o.map_seed = 9;
  o.seed = 3;
  auto ood = generate(planted_domain(o), 500);
  auto table = fit_markov(train);
  auto sid = aggregates(table, id);
  auto sood = aggregates(table, ood);
  EXPECT_GE(auroc(sid, sood), 0.99);
  EXPECT_LE(fpr_at_tpr(sid, sood), 0.05);
}

TEST(Synth, FeaturesBinarizeToTheSameSets) {
  PlantedDomainOptions o;
  o.dim = 100;
  o.k = 7;
  o.pool_size = 30;
  o.noise = 0.2;
  auto spec = planted_domain(o);
  spec.background = 15;
  auto seqs = generate(spec, 30);
  auto feats = generate_features(spec, 30);
  ASSERT_EQ(feats.size(), seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    EXPECT_EQ(feats[i].sample_id, seqs[i].sample_id);
    for (const auto& l : feats[i].layers) {
      EXPECT_EQ(l.entries.size(), 22u);
      for (const auto& [f, v] : l.entries) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 2.0);
      }
    }
    auto back = binarize_trajectory(feats[i], nullptr, 1.0, spec.k);
    EXPECT_EQ(back.layers, seqs[i].layers);
  }
}

TEST(Synth, RejectsInfeasibleSpecs) {
  PlantedDomainOptions o;
  o.k = 10;
  o.pool_size = 5;
  EXPECT_THROW(generate(planted_domain(o), 1), InvalidInput);
  o.pool_size = 64;
  auto spec = planted_domain(o);
  spec.noise = 1.5;
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = planted_domain(o);
  spec.transitions.pop_back();
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = planted_domain(o);
  spec.transitions[0].begin()->second[0].weight = 0.0;
  EXPECT_THROW(validate(spec), InvalidInput);
  spec = planted_domain(o);
  spec.pools[2][0] = 9999;
  EXPECT_THROW(validate(spec), InvalidInput);
  EXPECT_THROW(generate(planted_domain(o), 0), InvalidInput);
  o.branching = 0;
  EXPECT_THROW(planted_domain(o), InvalidInput);
}
