#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sdrgate/error.hpp"
#include "sdrgate/rnn.hpp"
#include "support.hpp"

using namespace sdrgate;
using sdrgate::testing::make_seq;
using sdrgate::testing::random_corpus;

namespace {

/// Model whose output ignores the input: all weights zero, output bias as given.
RecurrentPredictor constant_model(std::size_t dim, std::size_t hidden, const std::vector<double>& bias) {
  RecurrentPredictor base(dim, hidden, 0);
  std::vector<double> p(base.parameters().size(), 0.0);
  for (const auto& t : base.layout()) {
    if (t.name == "output_bias") {
      for (std::size_t i = 0; i < dim; ++i) p[t.offset + i] = bias[i];
    }
  }
  return RecurrentPredictor::from_parameters(dim, hidden, std::move(p));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

/// Per-bit BCE averaged over D, computed directly.
double bce_oracle(const std::vector<double>& p, const ActiveSet& s) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bool on = std::find(s.begin(), s.end(), static_cast<FeatureIndex>(i)) != s.end();
    sum -= on ? std::log(p[i]) : std::log(1.0 - p[i]);
  }
  return sum / static_cast<double>(p.size());
}

}  // namespace

TEST(Rnn, BceOfUninformedPredictorIsLn2) {
  auto m = constant_model(8, 3, std::vector<double>(8, 0.0));
  auto s = rnn_score(m, make_seq("x", 8, {{1, 2}, {3, 4}, {0}}));
  ASSERT_EQ(s.per_layer.size(), 2u);
  for (const auto& a : s.per_layer) EXPECT_NEAR(a.value, std::log(2.0), 1e-12);
}

TEST(Rnn, BceTwoBitExample) {
  auto m = constant_model(2, 2, {logit(0.8), logit(0.2)});
  auto s = rnn_score(m, make_seq("x", 2, {{1}, {0}}));
  EXPECT_NEAR(s.per_layer[0].value, 0.2231, 1e-4);
  EXPECT_NEAR(s.per_layer[0].value, -std::log(0.8), 1e-12);
}

TEST(Rnn, ScoreMatchesDirectBce) {
  std::mt19937_64 rng(71);
  RecurrentPredictor m(12, 5, 3);
  for (const auto& x : random_corpus(rng, 10, 12, 4, 5)) {
    auto probs = m.predict(x);
    auto s = rnn_score(m, x);
    ASSERT_EQ(s.per_layer.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) {
      for (double p : probs[t]) {
        EXPECT_GE(p, kProbabilityClamp);
        EXPECT_LE(p, 1.0 - kProbabilityClamp);
      }
      EXPECT_NEAR(s.per_layer[t].value, bce_oracle(probs[t], x.layers[t + 1].active), 1e-12);
    }
  }
}

TEST(Rnn, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(72);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    RecurrentPredictor m(10, 6, seed);
    auto batch = random_corpus(rng, 3, 10, 4, 4);
    EXPECT_LT(gradient_check(m, batch), 1e-4) << "seed " << seed;
  }
  RecurrentPredictor big(16, 8, 5);
  EXPECT_LT(gradient_check(big, random_corpus(rng, 2, 16, 5, 6)), 1e-4);
}

TEST(Rnn, NonFiniteParametersAreRejected) {
  RecurrentPredictor m(6, 3, 1);
  std::vector<double> p(m.parameters().begin(), m.parameters().end());
  p[0] = std::nan("");
  EXPECT_THROW(RecurrentPredictor::from_parameters(6, 3, p), InvalidInput);
  m.mutable_parameters()[1] = INFINITY;
  EXPECT_FALSE(m.finite());
  std::vector<SdrSequence> batch{make_seq("x", 6, {{1}, {2}})};
  EXPECT_THROW(gradient_check(m, batch), TrainingFailure);
}

TEST(Rnn, DivergentTrainingRaisesWithEpoch) {
  std::mt19937_64 rng(73);
  auto corpus = random_corpus(rng, 8, 8, 3, 3);
  RnnHyperparameters h;
  h.hidden = 4;
  h.epochs = 5;
  h.batch_size = 4;
  h.learning_rate = 1e308;
  h.clip_norm = 0.0;
  try {
    rnn_fit(corpus, h);
    FAIL() << "expected TrainingFailure";
  } catch (const TrainingFailure& e) {
    ASSERT_TRUE(e.epoch().has_value());
    EXPECT_GE(*e.epoch(), 0);
  }
}

TEST(Rnn, NoEpochsOrZeroRateLeavesParameters) {
  std::mt19937_64 rng(74);
  auto corpus = random_corpus(rng, 6, 8, 3, 3);
  RnnHyperparameters h;
  h.hidden = 4;
  h.seed = 11;
  RecurrentPredictor init(8, 4, 11);
  h.epochs = 0;
  auto a = rnn_fit(corpus, h);
  EXPECT_TRUE(a.model == init);
  EXPECT_TRUE(a.epoch_loss.empty());
  h.epochs = 3;
  h.learning_rate = 0.0;
  auto b = rnn_fit(corpus, h);
  EXPECT_TRUE(b.model == init);
  EXPECT_EQ(b.epoch_loss.size(), 3u);
}

TEST(Rnn, LearnsDeterministicTransitions) {
  std::vector<SdrSequence> corpus;
  for (int i = 0; i < 16; ++i) {
    corpus.push_back(make_seq("s" + std::to_string(i), 16, {{0, 1}, {4, 5}, {8, 9}, {12, 13}}));
  }
  RnnHyperparameters h;
  h.hidden = 8;
  h.epochs = 60;
  h.batch_size = 8;
  h.learning_rate = 0.05;
  h.seed = 2;
  auto fit = rnn_fit(corpus, h);
  ASSERT_EQ(fit.epoch_loss.size(), 60u);
  EXPECT_LT(fit.epoch_loss.back(), 0.1 * fit.epoch_loss.front());
  auto seen = rnn_score(fit.model, corpus[0]).aggregate;
  auto novel = rnn_score(fit.model, make_seq("n", 16, {{0, 1}, {6, 7}, {10, 11}, {2, 3}})).aggregate;
  EXPECT_LT(seen, novel);
}

TEST(Rnn, SeededTrainingIsReproducible) {
  std::mt19937_64 rng(75);
  auto corpus = random_corpus(rng, 20, 10, 4, 3);
  RnnHyperparameters h;
  h.hidden = 6;
  h.epochs = 3;
  h.batch_size = 7;
  h.seed = 5;
  auto a = rnn_fit(corpus, h);
  auto b = rnn_fit(corpus, h);
  EXPECT_TRUE(a.model == b.model);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_TRUE(RecurrentPredictor(10, 6, 5) == RecurrentPredictor(10, 6, 5));
  EXPECT_FALSE(RecurrentPredictor(10, 6, 5) == RecurrentPredictor(10, 6, 6));
}

TEST(Rnn, EmptyLayersAreSkipped) {
  RecurrentPredictor m(8, 3, 0);
  auto s = rnn_score(m, make_seq("x", 8, {{1}, {}, {3}, {4}}));
  EXPECT_EQ(s.skipped_layers, (std::vector<int>{2, 3}));
  ASSERT_EQ(s.per_layer.size(), 1u);
  EXPECT_EQ(s.per_layer[0].layer, 4);
}

TEST(Rnn, RejectsBadInput) {
  RnnHyperparameters h;
  h.hidden = 0;
  EXPECT_THROW(validate(h), InvalidInput);
  RecurrentPredictor m(8, 3, 0);
  EXPECT_THROW(rnn_score(m, make_seq("x", 9, {{1}, {2}})), InvalidInput);
  EXPECT_THROW(rnn_score(m, make_seq("x", 8, {{1}})), InvalidInput);
  EXPECT_THROW(RecurrentPredictor::from_parameters(8, 3, std::vector<double>(5, 0.0)), InvalidInput);
}
