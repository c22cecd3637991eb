// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdrgate/cohesion.hpp"
#include "sdrgate/error.hpp"
#include "sdrgate/htm.hpp"
#include "sdrgate/io_formats.hpp"
#include "sdrgate/markov.hpp"
#include "sdrgate/metrics.hpp"
#include "sdrgate/model_file.hpp"
#include "sdrgate/registry.hpp"
#include "sdrgate/rnn.hpp"
#include "sdrgate/synth.hpp"
#include "support.hpp"

using namespace sdrgate;
using sdrgate::testing::make_seq;
using sdrgate::testing::random_corpus;
using sdrgate::testing::random_set;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- oracles -----------------------------------------------------------------

struct DenseMarkov {
  std::size_t dim;
  double alpha;
  std::vector<std::vector<std::vector<double>>> counts;  // [pair][i][j]

  DenseMarkov(const std::vector<SdrSequence>& corpus, double a) : dim(corpus[0].dim), alpha(a) {
    std::size_t pairs = corpus[0].layers.size() - 1;
    counts.assign(pairs, std::vector<std::vector<double>>(dim, std::vector<double>(dim, 0.0)));
    for (const auto& x : corpus) {
      for (std::size_t p = 0; p < pairs; ++p) {
        for (auto i : x.layers[p].active) {
          for (auto j : x.layers[p + 1].active) counts[p][i][j] += 1.0;
        }
      }
    }
  }

  double prob(std::size_t p, std::size_t i, std::size_t j) const {
    double n = 0.0;
    for (std::size_t t = 0; t < dim; ++t) n += counts[p][i][t];
    return (counts[p][i][j] + alpha) / (n + alpha * static_cast<double>(dim));
  }

  double score(const SdrSequence& x) const {
    double total = 0.0;
    int scored = 0;
    for (std::size_t p = 0; p + 1 < x.layers.size(); ++p) {
      const auto& a = x.layers[p].active;
      const auto& b = x.layers[p + 1].active;
      if (a.empty() || b.empty()) continue;
      double s = 0.0;
      for (auto i : a) {
        for (auto j : b) s -= std::log(prob(p, i, j));
      }
      total += s / static_cast<double>(a.size() * b.size());
      ++scored;
    }
    return scored ? total / scored : std::numeric_limits<double>::quiet_NaN();
  }
};

double pair_count_auroc(const std::vector<double>& id, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double o : ood) {
    for (double i : id) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(id.size() * ood.size());
}

// Smallest FPR over thresholds whose TPR reaches the target; OOD iff score > tau.
double exhaustive_fpr(const std::vector<double>& id, const std::vector<double>& ood, double target) {
  std::set<double> taus(id.begin(), id.end());
  taus.insert(ood.begin(), ood.end());
  taus.insert(-std::numeric_limits<double>::infinity());
  double best = 1.0;
  for (double tau : taus) {
    double tp = 0, fp = 0;
    for (double o : ood) tp += o > tau;
    for (double i : id) fp += i > tau;
    if (tp / static_cast<double>(ood.size()) >= target) best = std::min(best, fp / static_cast<double>(id.size()));
  }
  return best;
}

double naive_jaccard(const ActiveSet& a, const ActiveSet& b) {
  std::set<FeatureIndex> u(a.begin(), a.end());
  u.insert(b.begin(), b.end());
  std::size_t inter = 0;
  for (auto f : a) inter += std::count(b.begin(), b.end(), f) ? 1 : 0;
  return static_cast<double>(inter) / static_cast<double>(u.size());
}

using Tuple = std::vector<FeatureIndex>;

void tuples_of(const SdrSequence& x, std::size_t start, std::size_t hop, Tuple& cur, std::set<Tuple>& out) {
  if (cur.size() == hop + 1) {
    out.insert(cur);
    return;
  }
  for (auto f : x.layers[start + cur.size()].active) {
    cur.push_back(f);
    tuples_of(x, start, hop, cur, out);
    cur.pop_back();
  }
}

std::set<Tuple> induced(const SdrSequence& x, std::size_t start, std::size_t hop) {
  std::set<Tuple> out;
  Tuple cur;
  tuples_of(x, start, hop, cur, out);
  return out;
}

std::vector<double> aggregates(const std::function<AnomalyScore(const SdrSequence&)>& f,
                               const std::vector<SdrSequence>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(f(x).aggregate);
  return out;
}

struct Domains {
  std::vector<SdrSequence> train, id, ood;
};

Domains standard_benchmark() {
  PlantedDomainOptions o;  // D 512, L 6, k 10, pool 64, noise 0.05
  o.map_seed = 1;
  o.seed = 1;
  o.domain = "id";
  Domains d;
  d.train = generate(planted_domain(o), 500);
  o.seed = 2;
  auto test_spec = planted_domain(o);
  d.id = generate(test_spec, 500);
  o.pool_offset = 256;
  o.map_seed = 2;
  o.seed = 3;
  o.domain = "ood";
  d.ood = generate(planted_domain(o), 500);
  return d;
}

// --- criteria ------------------------------------------------------------------

std::vector<std::vector<SdrSequence>> markov_instances() {
  std::mt19937_64 rng(1001);
  std::vector<std::vector<SdrSequence>> out;
  for (int t = 0; t < 100; ++t) {
    std::size_t dim = 2 + rng() % 7;     // 2..8
    std::size_t layers = 2 + rng() % 3;  // 2..4
    std::size_t n = 1 + rng() % 20;
    out.push_back(random_corpus(rng, n + 5, dim, layers, dim));
  }
  return out;
}

Outcome markov_oracle() {
  auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  auto instances = markov_instances();
  for (std::size_t t = 0; t < instances.size(); ++t) {
    const auto& all = instances[t];
    std::vector<SdrSequence> train(all.begin(), all.end() - 5);
    std::vector<SdrSequence> test(all.end() - 5, all.end());
    double alpha = t % 2 ? 0.1 : 1.0;
    auto table = fit_markov(train, alpha);
    DenseMarkov dense(train, alpha);
    for (const auto& x : test) {
      worst = std::max(worst, std::abs(score(table, x).aggregate - dense.score(x)));
      ++checked;
    }
  }
  double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0,
          std::to_string(checked) + " scores, max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.2f s", secs)};
}

Outcome row_normalization() {
  double worst = 0.0;
  std::size_t rows = 0;
  auto instances = markov_instances();
  for (std::size_t t = 0; t < instances.size(); ++t) {
    std::vector<SdrSequence> train(instances[t].begin(), instances[t].end() - 5);
    auto table = fit_markov(train, t % 2 ? 0.1 : 1.0);
    for (const auto& pair : table.all_transitions()) {
      for (auto src : pair.sources) {
        double sum = 0.0;
        for (std::size_t j = 0; j < table.dim(); ++j) {
          sum += table.probability(pair.layer, src, static_cast<FeatureIndex>(j));
        }
        worst = std::max(worst, std::abs(sum - 1.0));
        ++rows;
      }
    }
  }
  return {worst <= 1e-9, std::to_string(rows) + " rows, max |sum - 1| " + fmt("%.3g", worst)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  bool symmetric = true;
  bool fpr_ok = true;
  for (int t = 0; t < 100; ++t) {
    std::size_t n_id = 1 + rng() % 200;
    std::size_t n_ood = 1 + rng() % 200;
    int levels = 1 + static_cast<int>(rng() % 30);
    std::uniform_int_distribution<int> d(0, levels);
    double shift = (rng() % 5) * 0.1;
    std::vector<double> id(n_id), ood(n_ood);
    for (auto& v : id) v = d(rng) * 0.1;
    for (auto& v : ood) v = d(rng) * 0.1 + shift;
    worst = std::max(worst, std::abs(auroc(id, ood) - pair_count_auroc(id, ood)));
    if (auroc(id, ood) + auroc(ood, id) != 1.0) symmetric = false;
    if (fpr_at_tpr(id, ood, 0.95) != exhaustive_fpr(id, ood, 0.95)) fpr_ok = false;
  }
  return {worst <= 1e-9 && symmetric && fpr_ok,
          "max |auroc - pairs| " + fmt("%.3g", worst) + (symmetric ? ", complement exact" : ", complement broken") +
              (fpr_ok ? ", fpr95 matches enumeration" : ", fpr95 mismatch")};
}

Outcome cohesion_equivalence() {
  std::mt19937_64 rng(1003);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<ActiveSet> sets;
    for (int i = 0; i < 10; ++i) sets.push_back(random_set(rng, 32, 4));
    auto fast = batch_jaccard_layer(sets, 32);
    std::vector<double> js;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      for (std::size_t j = i + 1; j < sets.size(); ++j) js.push_back(naive_jaccard(sets[i], sets[j]));
    }
    double mean = 0.0;
    for (double v : js) mean += v;
    mean /= static_cast<double>(js.size());
    double var = 0.0;
    for (double v : js) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(js.size()));
    worst = std::max({worst, std::abs(fast.mean - mean), std::abs(fast.stddev - sd)});
    if (fast.pairs != js.size()) worst = INFINITY;
  }
  return {worst <= 1e-12, "50 batches, max |diff| " + fmt("%.3g", worst)};
}

Outcome registry_fidelity() {
  std::mt19937_64 rng(1004);
  std::size_t checks = 0;
  bool ok = true;
  for (std::size_t dim = 2; dim <= 6 && ok; ++dim) {
    for (std::size_t hop = 0; hop <= 2 && ok; ++hop) {
      for (int t = 0; t < 10 && ok; ++t) {
        auto train = random_corpus(rng, 1 + rng() % 4, dim, 3, dim);
        auto test = random_corpus(rng, 4, dim, 3, dim, "t");
        auto reg = build_registry(train, hop);
        for (std::size_t start = 0; start + hop < 3; ++start) {
          int layer = train[0].layers[start].layer;
          std::set<Tuple> v;
          for (const auto& x : train) {
            auto s = induced(x, start, hop);
            v.insert(s.begin(), s.end());
          }
          std::vector<Tuple> stored = reg.tuples(layer);
          if (stored != std::vector<Tuple>(v.begin(), v.end())) ok = false;
          for (const auto& x : test) {
            auto tset = induced(x, start, hop);
            std::size_t hit = 0;
            for (const auto& tup : tset) hit += v.count(tup);
            double ind = static_cast<double>(hit) / static_cast<double>(tset.size());
            double regn = static_cast<double>(hit) / static_cast<double>(v.size());
            if (trajectory_score(reg, x, layer, hop, RegistryNormalization::Induced) != ind) ok = false;
            if (trajectory_score(reg, x, layer, hop, RegistryNormalization::Registry) != regn) ok = false;
            checks += 2;
          }
        }
      }
    }
  }
  return {ok, std::to_string(checks) + " exact comparisons" + (ok ? "" : ", mismatch found")};
}

Outcome synthetic_separation() {
  auto t0 = Clock::now();
  auto d = standard_benchmark();
  auto table = fit_markov(d.train);
  auto f = [&](const SdrSequence& x) { return score(table, x); };
  auto sid = aggregates(f, d.id);
  auto sood = aggregates(f, d.ood);
  double a = auroc(sid, sood);
  double fpr = fpr_at_tpr(sid, sood);

  // Planted 2-step structure only: both domains share one pool (identical
  // single-layer statistics) and differ only in their transition maps.
  PlantedDomainOptions o;
  o.pool_size = 256;
  o.map_seed = 11;
  o.seed = 4;
  auto train = generate(planted_domain(o), 200);
  o.seed = 5;
  auto id = generate(planted_domain(o), 500);
  o.map_seed = 12;
  o.seed = 6;
  auto ood = generate(planted_domain(o), 500);
  double hop_auroc[2];
  for (std::size_t hop = 0; hop < 2; ++hop) {
    auto reg = build_registry(train, hop);
    auto g = [&](const SdrSequence& x) { return registry_anomaly(reg, x); };
    hop_auroc[hop] = auroc(aggregates(g, id), aggregates(g, ood));
  }
  double secs = seconds_since(t0);
  bool pass = a >= 0.99 && fpr <= 0.05 && secs < 30.0 && hop_auroc[1] > hop_auroc[0];
  return {pass, "markov auroc " + fmt("%.4f", a) + " fpr95 " + fmt("%.4f", fpr) + "; registry hop-0 " +
                    fmt("%.4f", hop_auroc[0]) + " < hop-1 " + fmt("%.4f", hop_auroc[1]) + "; " +
                    fmt("%.2f s", secs)};
}

Outcome rnn_gradient() {
  std::mt19937_64 rng(1005);
  double worst = 0.0;
  int instances = 0;
  for (std::size_t dim : {4, 9, 16}) {
    for (std::size_t hidden : {1, 4, 8}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        RecurrentPredictor m(dim, hidden, seed);
        auto batch = random_corpus(rng, 3, dim, 4, std::max<std::size_t>(1, dim / 3));
        worst = std::max(worst, gradient_check(m, batch, 1e-5));
        ++instances;
      }
    }
  }
  return {worst < 1e-4, std::to_string(instances) + " instances, max relative error " + fmt("%.3g", worst)};
}

Outcome htm_learnability_and_saturation() {
  // Learnability: one deterministic sequence repeated.
  auto seq = make_seq("rep", 128,
                      {{1, 9, 17, 33, 65, 100, 120}, {2, 10, 18, 34, 66, 101, 121}, {3, 11, 19, 35, 67, 102, 122},
                       {4, 12, 20, 36, 68, 103, 123}, {5, 13, 21, 37, 69, 104, 124}},
                      0, 7);
  std::vector<SdrSequence> repeated(5, seq);
  auto fit = tm_fit(repeated, TemporalMemoryConfig::for_sparsity(7), 5);
  double learned = 0.0;
  for (const auto& a : tm_score(fit.model, seq).per_layer) learned = std::max(learned, a.value);

  // Saturation: k = 128 over a 256-feature space. Both domains fill half the
  // columns from the same 160-feature pool and differ only in transitions.
  PlantedDomainOptions o;
  o.dim = 256;
  o.k = 128;
  o.pool_size = 160;
  o.layers = 4;
  o.map_seed = 21;
  o.seed = 7;
  auto train = generate(planted_domain(o), 100);
  o.seed = 8;
  auto id = generate(planted_domain(o), 100);
  o.map_seed = 22;
  o.seed = 9;
  auto ood = generate(planted_domain(o), 100);
  auto sat = tm_fit(train, TemporalMemoryConfig::for_sparsity(128), 1);
  auto f = [&](const SdrSequence& x) { return tm_score(sat.model, x); };
  double a = auroc(aggregates(f, id), aggregates(f, ood));
  double train_anomaly = sat.epoch_train_anomaly.back();
  bool pass = learned == 0.0 && std::abs(a - 0.5) <= 0.05;
  return {pass, "repeated sequence max anomaly " + fmt("%.3g", learned) + "; k=128 mean train anomaly " +
                    fmt("%.4f", train_anomaly) + ", auroc " + fmt("%.4f", a)};
}

Outcome backend_near_tie() {
  auto t0 = Clock::now();
  auto d = standard_benchmark();
  auto table = fit_markov(d.train);
  auto tm = tm_fit(d.train, TemporalMemoryConfig::for_sparsity(10), 1);
  RnnHyperparameters hp;
  hp.hidden = 32;
  hp.epochs = 5;
  hp.learning_rate = 1e-2;
  auto rnn = rnn_fit(d.train, hp);
  std::map<std::string, double> a;
  auto eval = [&](const std::string& name, const std::function<AnomalyScore(const SdrSequence&)>& f) {
    a[name] = auroc(aggregates(f, d.id), aggregates(f, d.ood));
  };
  eval("markov", [&](const SdrSequence& x) { return score(table, x); });
  eval("htm", [&](const SdrSequence& x) { return tm_score(tm.model, x); });
  eval("rnn", [&](const SdrSequence& x) { return rnn_score(rnn.model, x); });
  double lo = 1.0, hi = 0.0;
  std::string detail;
  for (const auto& [name, v] : a) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    detail += name + " " + fmt("%.4f", v) + ", ";
  }
  detail += "spread " + fmt("%.4f", hi - lo) + ", " + fmt("%.1f s", seconds_since(t0));
  return {hi - lo <= 0.05, detail};
}

/// write -> read -> write reproduces the first bytes.
template <class T, class Write, class Read>
bool canonical(const T& value, const Write& write, const Read& read) {
  std::ostringstream first;
  write(first, value);
  std::istringstream in(first.str());
  auto back = read(in);
  std::ostringstream second;
  write(second, back);
  return first.str() == second.str();
}

bool rejects_at(const std::string& bytes, const std::function<void(std::istream&)>& read,
                std::uint64_t position) {
  try {
    std::istringstream in(bytes);
    read(in);
  } catch (const ParseError& e) {
    return e.position() == position;
  }
  return false;
}

Outcome format_round_trips() {
  std::mt19937_64 rng(1006);
  std::vector<std::string> failed;
  auto check = [&](const std::string& name, bool ok) {
    if (!ok) failed.push_back(name);
  };

  PlantedDomainOptions o;
  o.dim = 64;
  o.k = 6;
  o.pool_size = 20;
  auto spec = planted_domain(o);
  spec.background = 5;
  auto seqs = generate(spec, 12);
  auto feats = generate_features(spec, 12);

  auto traj = [](const io::TrajectoryFile& f) {
    std::ostringstream os;
    io::write_trajectories(os, f);
    return os.str();
  };
  for (const auto& file : {io::to_file(seqs), io::to_file(feats)}) {
    std::istringstream in(traj(file));
    auto back = io::read_trajectories(in);
    check("trajectories", back == file && traj(back) == traj(file));
  }

  DenseActivationTensor t;
  t.layers = 3;
  t.tokens = 4;
  t.dim = 5;
  t.token_mask = {1, 1, 1, 0};
  std::normal_distribution<float> g;
  for (int i = 0; i < 60; ++i) t.values.push_back(g(rng));
  std::string dense_bytes;
  {
    std::ostringstream os;
    io::write_dense(os, t);
    io::write_dense(os, t);
    dense_bytes = os.str();
  }
  {
    std::istringstream in(dense_bytes);
    auto back = io::read_dense(in);
    std::ostringstream os;
    for (const auto& b : back) io::write_dense(os, b);
    check("dense", back.size() == 2 && os.str() == dense_bytes);
  }

  DensityTable density(0.0);
  for (int i = 0; i < 30; ++i) density.set(i % 3, static_cast<FeatureIndex>(i), std::uniform_real_distribution<double>(0, 1)(rng));
  check("density", canonical(density, io::write_density, [](std::istream& in) { return io::read_density(in); }));

  LabelTable labels;
  labels.add(1, 2, "tab\tnewline\nslash\\");
  labels.add(3, 4, "plain label");
  check("labels", canonical(labels, io::write_labels, [](std::istream& in) { return io::read_labels(in); }));

  SaeEncoder enc{4, 3, 5, {}, {}, Rectifier::JumpRelu, {}};
  for (int i = 0; i < 15; ++i) enc.weight.push_back(g(rng));
  for (int i = 0; i < 5; ++i) {
    enc.bias.push_back(g(rng));
    enc.thresholds.push_back(std::abs(g(rng)));
  }
  check("encoders", canonical(std::vector<SaeEncoder>{enc}, io::write_encoders,
                              [](std::istream& in) { return io::read_encoders(in); }));

  auto table = fit_markov(seqs);
  std::vector<AnomalyScore> scores;
  for (const auto& x : seqs) scores.push_back(score(table, x));
  AnomalyScore empty{"unscored", {}, {1, 2}, 0.0};
  finalize(empty);
  scores.push_back(empty);
  check("scores", canonical(scores, io::write_scores, [](std::istream& in) { return io::read_scores(in); }));

  RnnHyperparameters hp;
  hp.hidden = 4;
  hp.epochs = 1;
  auto tm = tm_fit(seqs, TemporalMemoryConfig::for_sparsity(6), 1);
  auto rnn = rnn_fit(seqs, hp);
  std::vector<Model> models = {MarkovModel{table}, HtmModel{tm.model, {0, 5}, 1, tm.epoch_train_anomaly},
                               RnnModel{rnn.model, hp, {0, 5}, rnn.epoch_loss},
                               RegistryModel{build_registry(seqs, 1), RegistryNormalization::Induced}};
  for (const auto& m : models) {
    check("model " + model_kind(m),
          canonical(m, write_model, [](std::istream& in) { return read_model(in); }));
  }

  // Corrupted headers carry positions.
  std::string model_bytes;
  {
    std::ostringstream os;
    write_model(os, models[0]);
    model_bytes = os.str();
  }
  auto read_model_fn = [](std::istream& in) { read_model(in); };
  std::string bad = model_bytes;
  bad[0] = 'X';
  check("model magic", rejects_at(bad, read_model_fn, 0));
  bad = model_bytes;
  bad[4] = 9;
  check("model version", rejects_at(bad, read_model_fn, 4));
  bad = model_bytes;
  bad[12] = '!';
  check("model header", rejects_at(bad, read_model_fn, 12));
  bad = dense_bytes;
  bad[1] = 'X';
  check("dense magic", rejects_at(bad, [](std::istream& in) { io::read_dense(in); }, 0));
  check("trajectory header",
        rejects_at("{\"format\":\"other\"}\n", [](std::istream& in) { io::read_trajectories(in); }, 1));
  check("density header", rejects_at("layer,density\n", [](std::istream& in) { io::read_density(in); }, 1));
  check("label header", rejects_at("id\tlabel\n", [](std::istream& in) { io::read_labels(in); }, 1));
  check("score header", rejects_at("id,score\n", [](std::istream& in) { io::read_scores(in); }, 1));

  std::string detail = "trajectories, dense, density, labels, encoders, scores, 4 model kinds";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"markov oracle equivalence", markov_oracle},
      {"markov row normalization", row_normalization},
      {"metric oracles", metric_oracles},
      {"cohesion gram equivalence", cohesion_equivalence},
      {"registry fidelity", registry_fidelity},
      {"synthetic separation", synthetic_separation},
      {"rnn gradient check", rnn_gradient},
      {"htm learnability and saturation", htm_learnability_and_saturation},
      {"backend near-tie", backend_near_tie},
      {"format round-trips", format_round_trips},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-32s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures ? 1 : 0;
}
