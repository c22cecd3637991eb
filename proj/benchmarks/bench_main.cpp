#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "sdrgate/cohesion.hpp"
#include "sdrgate/htm.hpp"
#include "sdrgate/markov.hpp"
#include "sdrgate/metrics.hpp"
#include "sdrgate/registry.hpp"
#include "sdrgate/rnn.hpp"
#include "sdrgate/synth.hpp"

using namespace sdrgate;

namespace {

std::vector<SdrSequence> corpus(std::size_t n, std::size_t dim, std::size_t k) {
  PlantedDomainOptions o;
  o.dim = dim;
  o.k = k;
  o.pool_size = std::max<std::size_t>(4 * k, 64);
  o.seed = 1;
  return generate(planted_domain(o), n);
}

void BM_MarkovFit(benchmark::State& state) {
  auto xs = corpus(static_cast<std::size_t>(state.range(0)), 16384, 10);
  auto threads = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(fit_markov(xs, 1.0, threads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MarkovFit)->Args({1000, 1})->Args({1000, 4})->Unit(benchmark::kMillisecond);

void BM_MarkovScore(benchmark::State& state) {
  auto xs = corpus(1000, 16384, 10);
  auto table = fit_markov(xs);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(score(table, xs[i++ % xs.size()]));
}
BENCHMARK(BM_MarkovScore);

void BM_HtmEpoch(benchmark::State& state) {
  auto xs = corpus(200, 2048, static_cast<std::size_t>(state.range(0)));
  auto cfg = TemporalMemoryConfig::for_sparsity(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tm_fit(xs, cfg, 1));
}
BENCHMARK(BM_HtmEpoch)->Arg(10)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_RnnEpoch(benchmark::State& state) {
  auto xs = corpus(200, 512, 10);
  RnnHyperparameters hp;
  hp.hidden = static_cast<std::size_t>(state.range(0));
  hp.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(rnn_fit(xs, hp));
}
BENCHMARK(BM_RnnEpoch)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RegistryBuild(benchmark::State& state) {
  auto xs = corpus(500, 512, 10);
  auto hop = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_registry(xs, hop));
}
BENCHMARK(BM_RegistryBuild)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_BatchJaccard(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<ActiveSet> sets;
  std::uniform_int_distribution<FeatureIndex> f(0, 16383);
  for (std::size_t i = 0; i < n; ++i) {
    ActiveSet s;
    while (s.size() < 10) {
      auto v = f(rng);
      if (std::find(s.begin(), s.end(), v) == s.end()) s.push_back(v);
    }
    std::sort(s.begin(), s.end());
    sets.push_back(s);
  }
  for (auto _ : state) benchmark::DoNotOptimize(batch_jaccard_layer(sets, 16384));
}
BENCHMARK(BM_BatchJaccard)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> id(n), ood(n);
  for (auto& v : id) v = g(rng);
  for (auto& v : ood) v = g(rng) + 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(auroc(id, ood));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
