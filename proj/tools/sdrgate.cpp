// sdrgate command line tool: encode, fit, score, eval, analyze-cohesion,
// analyze-registry, sweep, explain, synth.
//
// Exit codes: 0 ok, 2 usage, 3 malformed input file, 4 validation, 5 runtime.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sdrgate/cohesion.hpp"
#include "sdrgate/error.hpp"
#include "sdrgate/htm.hpp"
#include "sdrgate/io_formats.hpp"
#include "sdrgate/markov.hpp"
#include "sdrgate/metrics.hpp"
#include "sdrgate/model_file.hpp"
#include "sdrgate/registry.hpp"
#include "sdrgate/repr_pipeline.hpp"
#include "sdrgate/rnn.hpp"
#include "sdrgate/synth.hpp"

#ifndef SDRGATE_VERSION
#define SDRGATE_VERSION "unknown"
#endif

namespace {

using namespace sdrgate;
using json = nlohmann::ordered_json;

enum Exit { kOk = 0, kUsage = 2, kParse = 3, kValidation = 4, kRuntime = 5 };

// --- files -----------------------------------------------------------------

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Echo of every option of the subcommand, written to <output>.manifest.json.
void write_manifest(const CLI::App& cmd, const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "sdrgate";
  m["version"] = SDRGATE_VERSION;
  m["command"] = cmd.get_name();
  json opts = json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (opt->get_expected_max() == 0) {
      opts[name] = opt->count() > 0;
      continue;
    }
    const auto& results = opt->results();
    if (results.empty()) {
      opts[name] = opt->get_default_str().empty() ? json(nullptr) : json(opt->get_default_str());
    } else if (results.size() == 1 && opt->get_expected_max() <= 1) {
      opts[name] = results.front();
    } else {
      opts[name] = results;
    }
  }
  m["options"] = std::move(opts);
  m["formats"] = {{"trajectories", io::kTrajectoryVersion},
                  {"dense", io::kDenseVersion},
                  {"encoders", io::kEncoderVersion},
                  {"model", kModelFileVersion}};
  m["outputs"] = outputs;
  for (const auto& out : outputs) {
    auto f = open_out(out + ".manifest.json");
    f << m.dump(2) << '\n';
    finish(f, out + ".manifest.json");
  }
}

// --- parsing helpers -------------------------------------------------------

std::optional<LayerRange> parse_range(const std::string& text) {
  if (text.empty()) return std::nullopt;
  auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      int l = std::stoi(text);
      return LayerRange{l, l};
    }
    LayerRange r{std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
    if (r.lo > r.hi) throw InvalidInput("layer range lo > hi: " + text);
    return r;
  } catch (const std::logic_error&) {
    throw InvalidInput("layer range must be LO:HI, got '" + text + "'");
  }
}

RegistryNormalization parse_normalization(const std::string& s) {
  return s == "registry" ? RegistryNormalization::Registry : RegistryNormalization::Induced;
}

DensityTable load_density(const std::string& path) {
  auto in = open_in(path);
  return io::read_density(in, 0.0, path);
}

io::TrajectoryFile load_trajectory_file(const std::string& path) {
  auto in = open_in(path);
  return io::read_trajectories(in, path);
}

SdrSequence crop(const SdrSequence& s, const LayerRange& r) {
  if (!s.range().contains(r)) {
    throw InvalidInput("sample '" + s.sample_id + "' spans " + to_string(s.range()) +
                       ", requested " + to_string(r));
  }
  SdrSequence out = s;
  out.layers.clear();
  for (const auto& l : s.layers) {
    if (r.contains(l.layer)) out.layers.push_back(l);
  }
  return out;
}

FeatureTrajectory crop(const FeatureTrajectory& t, const LayerRange& r) {
  FeatureTrajectory out = t;
  out.layers.clear();
  for (const auto& l : t.layers) {
    if (r.contains(l.layer)) out.layers.push_back(l);
  }
  if (out.layers.empty() || out.layers.front().layer != r.lo || out.layers.back().layer != r.hi) {
    throw InvalidInput("sample '" + t.sample_id + "' does not cover layers " + to_string(r));
  }
  return out;
}

/// Masks and binarizes each layer; a layer left empty by the mask becomes an
/// empty active set so scorers can flag it instead of aborting the batch.
SdrSequence binarize_lenient(const FeatureTrajectory& t, const DensityTable* table, double theta,
                             std::size_t k) {
  SdrSequence s;
  s.sample_id = t.sample_id;
  s.label = t.label;
  s.domain = t.domain;
  s.dim = t.dim;
  s.k = k;
  for (const auto& layer : t.layers) {
    SparseFeatureVector v = table ? apply_density_mask(layer, *table, theta) : layer;
    ActiveSet a = v.entries.empty() ? ActiveSet{} : topk_binarize(v, k);
    s.layers.push_back({layer.layer, std::move(a)});
  }
  return s;
}

struct SelectionFlags {
  std::size_t k = 10;
  double theta = 0.1;
  std::string density;
  std::string layers;

  void add(CLI::App* cmd) {
    cmd->add_option("--k", k, "Top-k when the input carries pooled values")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--theta", theta, "Density threshold in (0, 1]")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--density", density, "Density CSV used for masking pooled values")
        ->check(CLI::ExistingFile);
    cmd->add_option("--layers", layers, "Layer range LO:HI to keep");
  }
};

void check_theta(double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidInput("theta must be in (0, 1]");
}

/// Trajectories as active sets. Files with pooled values are binarized with
/// the selection flags; files with active sets are used as stored.
std::vector<SdrSequence> load_sequences(const std::string& path, const SelectionFlags& sel) {
  auto file = load_trajectory_file(path);
  auto range = parse_range(sel.layers);
  std::vector<SdrSequence> out;
  if (io::has_values(file)) {
    check_theta(sel.theta);
    std::optional<DensityTable> table;
    if (!sel.density.empty()) table = load_density(sel.density);
    for (auto& t : io::to_feature_trajectories(file)) {
      if (range) t = crop(t, *range);
      out.push_back(binarize_lenient(t, table ? &*table : nullptr, sel.theta, sel.k));
    }
  } else {
    for (auto& s : io::to_sequences(file)) out.push_back(range ? crop(s, *range) : std::move(s));
  }
  if (out.empty()) throw InvalidInput(path + " holds no records");
  return out;
}

std::vector<FeatureTrajectory> load_features(const std::string& path, const std::string& layers) {
  auto file = load_trajectory_file(path);
  if (!io::has_values(file)) throw InvalidInput(path + " carries no pooled values");
  auto range = parse_range(layers);
  auto out = io::to_feature_trajectories(file);
  if (range) {
    for (auto& t : out) t = crop(t, *range);
  }
  return out;
}

// --- training --------------------------------------------------------------

struct BackendFlags {
  double alpha = 1.0;
  unsigned threads = 1;
  std::size_t htm_epochs = 1;
  std::size_t cells_per_column = 8;
  std::size_t rnn_epochs = 20;
  std::size_t hidden = 128;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  std::size_t hop = 1;
  std::string normalization = "induced";

  void add(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Markov smoothing constant")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--threads", threads, "Markov fitting threads")
        ->check(CLI::Range(1u, 256u))
        ->capture_default_str();
    cmd->add_option("--htm-epochs", htm_epochs, "Temporal memory training passes")
        ->capture_default_str();
    cmd->add_option("--cells-per-column", cells_per_column, "Temporal memory cells per column")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--rnn-epochs", rnn_epochs, "Recurrent predictor epochs")->capture_default_str();
    cmd->add_option("--hidden", hidden, "Recurrent hidden width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--learning-rate", learning_rate, "Adam step size")->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "Recurrent mini-batch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--clip-norm", clip_norm, "Gradient norm clip, 0 disables")->capture_default_str();
    cmd->add_option("--hop", hop, "Registry hop length")->capture_default_str();
    cmd->add_option("--normalization", normalization, "Registry score normalization")
        ->check(CLI::IsMember({"induced", "registry"}))
        ->capture_default_str();
  }
};

std::size_t corpus_sparsity(std::span<const SdrSequence> corpus) {
  std::size_t k = corpus.front().k;
  if (k == 0) {
    for (const auto& s : corpus) {
      for (const auto& l : s.layers) k = std::max(k, l.active.size());
    }
  }
  return std::max<std::size_t>(k, 1);
}

Model train(const std::string& backend, std::span<const SdrSequence> corpus, const BackendFlags& f,
            std::uint64_t seed) {
  LayerRange range = validate_corpus(corpus);
  if (backend == "markov") return MarkovModel{fit_markov(corpus, f.alpha, f.threads)};
  if (backend == "htm") {
    auto config = TemporalMemoryConfig::for_sparsity(corpus_sparsity(corpus));
    config.cells_per_column = f.cells_per_column;
    config.seed = seed;
    auto fit = tm_fit(corpus, config, f.htm_epochs);
    return HtmModel{std::move(fit.model), range, f.htm_epochs, std::move(fit.epoch_train_anomaly)};
  }
  if (backend == "rnn") {
    RnnHyperparameters h;
    h.hidden = f.hidden;
    h.learning_rate = f.learning_rate;
    h.epochs = f.rnn_epochs;
    h.batch_size = f.batch_size;
    h.seed = seed;
    h.clip_norm = f.clip_norm;
    auto fit = rnn_fit(corpus, h);
    return RnnModel{std::move(fit.model), fit.hyper, range, std::move(fit.epoch_loss)};
  }
  if (backend == "registry") {
    return RegistryModel{build_registry(corpus, f.hop), parse_normalization(f.normalization)};
  }
  throw InvalidInput("unknown backend '" + backend + "'");
}

std::vector<AnomalyScore> score_all(const Model& model, std::span<const SdrSequence> xs) {
  std::vector<AnomalyScore> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(score_with(model, x));
  return out;
}

void report_training(const Model& model) {
  if (const auto* h = std::get_if<HtmModel>(&model)) {
    for (std::size_t e = 0; e < h->epoch_train_anomaly.size(); ++e) {
      std::cerr << "htm epoch " << e << " mean train anomaly "
                << io::format_double(h->epoch_train_anomaly[e]) << '\n';
    }
    if (!h->epoch_train_anomaly.empty() && h->epoch_train_anomaly.back() == 0.0) {
      std::cerr << "warning: train anomaly is 0; the model may be saturated\n";
    }
  } else if (const auto* r = std::get_if<RnnModel>(&model)) {
    for (std::size_t e = 0; e < r->epoch_loss.size(); ++e) {
      std::cerr << "rnn epoch " << e << " loss " << io::format_double(r->epoch_loss[e]) << '\n';
    }
  }
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::vector<std::string>& items, const char* what) {
  std::vector<T> out;
  for (const auto& s : split_list(items)) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(s, &used)));
      } else {
        if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
        out.push_back(static_cast<T>(std::stoull(s, &used)));
      }
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
      throw CLI::ValidationError(std::string(what) + ": cannot parse '" + s + "'");
    }
  }
  return out;
}

// --- subcommands -----------------------------------------------------------

struct EncodeCmd {
  std::vector<std::string> dense;
  std::string encoders;
  std::string out;
  std::string ids;
  std::string id_prefix = "sample";
  std::string domain;
  std::string label;
  int first_layer = 0;
  bool bypass = false;
  bool pooled = false;
  SelectionFlags sel;

  void run() {
    std::vector<SaeEncoder> enc;
    if (!bypass) {
      if (encoders.empty()) throw CLI::ValidationError("--encoders is required unless --bypass-sae");
      auto in = open_in(encoders, true);
      enc = io::read_encoders(in, encoders);
    }
    std::vector<std::string> names;
    if (!ids.empty()) {
      auto in = open_in(ids);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) names.push_back(line);
      }
    }
    PipelineConfig config;
    config.k = sel.k;
    config.theta = sel.theta;
    config.layer_range = parse_range(sel.layers);
    config.mode = bypass ? EncodingMode::RawBypass : EncodingMode::Sae;
    validate(config);
    std::optional<DensityTable> table;
    if (!sel.density.empty() && !bypass) table = load_density(sel.density);

    io::TrajectoryFile file;
    file.k = pooled ? 0 : sel.k;
    std::size_t index = 0;
    for (const auto& path : dense) {
      auto in = open_in(path, true);
      for (const auto& tensor : io::read_dense(in, first_layer, path)) {
        std::string id = index < names.size() ? names[index] : id_prefix + "-" + std::to_string(index);
        ++index;
        FeatureTrajectory t = pool_trajectory(tensor, enc, config, id);
        if (!domain.empty()) t.domain = domain;
        if (!label.empty()) t.label = label;
        if (file.dim == 0) file.dim = t.dim;
        if (pooled) {
          file.records.push_back(io::to_record(t));
        } else {
          SdrSequence s = binarize_lenient(t, table ? &*table : nullptr, sel.theta, sel.k);
          for (int l : s.underfilled_layers()) {
            std::cerr << "warning: sample " << id << " layer " << l << " has fewer than k features\n";
          }
          file.records.push_back(io::to_record(s));
        }
      }
    }
    if (!names.empty() && names.size() != index) {
      throw InvalidInput("--ids lists " + std::to_string(names.size()) + " ids for " +
                         std::to_string(index) + " samples");
    }
    auto f = open_out(out);
    io::write_trajectories(f, file);
    finish(f, out);
  }
};

struct FitCmd {
  std::string backend = "markov";
  std::string train;
  std::string out;
  std::uint64_t seed = 0;
  SelectionFlags sel;
  BackendFlags flags;

  void run() {
    auto corpus = load_sequences(train, sel);
    Model m = ::train(backend, corpus, flags, seed);
    report_training(m);
    auto f = open_out(out, true);
    write_model(f, m);
    finish(f, out);
  }
};

struct ScoreCmd {
  std::string model;
  std::string input;
  std::string out;
  SelectionFlags sel;

  void run() {
    auto in = open_in(model, true);
    Model m = read_model(in, model);
    auto xs = load_sequences(input, sel);
    auto scores = score_all(m, xs);
    std::size_t degenerate = 0;
    for (const auto& s : scores) degenerate += s.degenerate() ? 1 : 0;
    if (degenerate) std::cerr << degenerate << " samples had skipped layers\n";
    auto f = open_out(out);
    io::write_scores(f, scores);
    finish(f, out);
  }
};

struct EvalCmd {
  std::vector<std::string> id;
  std::vector<std::string> ood;
  std::string out;
  std::string format = "csv";
  std::string id_set = "id";
  std::string ood_set = "ood";
  std::string method = "";
  double tpr = 0.95;
  double quantile = 0.95;

  void run() {
    if (id.size() != ood.size()) {
      throw CLI::ValidationError("--id and --ood must be given the same number of times");
    }
    std::vector<ScoredPopulation> ids, oods;
    for (std::size_t s = 0; s < id.size(); ++s) {
      auto a = open_in(id[s]);
      ids.push_back(io::to_population(io::read_scores(a, id[s]), Role::InDomain));
      auto b = open_in(ood[s]);
      oods.push_back(io::to_population(io::read_scores(b, ood[s]), Role::OutOfDomain));
    }
    EvalReport report = evaluate(ids, oods, {tpr, quantile});
    if (report.excluded) std::cerr << report.excluded << " samples had no finite score\n";
    auto f = open_out(out);
    io::ReportContext ctx{id_set, ood_set, method};
    if (format == "jsonl") {
      io::write_report_jsonl(f, ctx, report);
    } else {
      io::write_report_csv(f, ctx, report);
    }
    finish(f, out);
    std::cout << "auroc " << io::format_double(report.mean.auroc) << " aupr_ood "
              << io::format_double(report.mean.aupr_ood_positive) << " fpr95 "
              << io::format_double(report.mean.fpr_at_95_tpr) << '\n';
  }
};

struct CohesionCmd {
  std::string input;
  std::string out;
  std::vector<std::string> ks;
  std::vector<std::string> thetas;
  std::string density;
  std::string layers;
  std::size_t max_samples = 1000;
  std::uint64_t seed = 0;
  bool zones = false;

  void run() {
    auto file = load_trajectory_file(input);
    std::vector<CohesionProfile> profiles;
    if (io::has_values(file)) {
      auto features = load_features(input, layers);
      auto kv = parse_list<std::size_t>(ks.empty() ? std::vector<std::string>{"10"} : ks, "--k");
      auto tv = parse_list<double>(thetas.empty() ? std::vector<std::string>{"1.0"} : thetas, "--theta");
      for (double t : tv) check_theta(t);
      std::optional<DensityTable> table;
      if (!density.empty()) table = load_density(density);
      profiles = depth_profile(features, table ? &*table : nullptr, kv, tv, max_samples, seed);
    } else {
      if (!ks.empty() || !thetas.empty()) {
        throw InvalidInput("--k/--theta sweeps need pooled values; " + input + " holds active sets");
      }
      SelectionFlags sel;
      sel.layers = layers;
      auto seqs = load_sequences(input, sel);
      profiles.push_back(cohesion_profile(seqs, max_samples, seed));
    }
    auto f = open_out(out);
    io::write_cohesion_csv(f, profiles, zones);
    finish(f, out);
  }
};

struct RegistryCmd {
  std::string train;
  std::string input;
  std::string out;
  std::vector<std::string> hops;
  std::string normalization = "induced";
  SelectionFlags sel;

  void run() {
    auto corpus = load_sequences(train, sel);
    auto xs = load_sequences(input, sel);
    auto hv = parse_list<std::size_t>(hops.empty() ? std::vector<std::string>{"0,1,2"} : hops, "--hops");
    std::vector<TupleRegistry> regs;
    for (std::size_t h : hv) regs.push_back(build_registry(corpus, h));
    auto rows = layerwise_profile(regs, xs, parse_normalization(normalization));
    auto f = open_out(out);
    io::write_profile_csv(f, rows);
    finish(f, out);
  }
};

struct SweepCmd {
  std::string train;
  std::string id;
  std::string ood;
  std::string out;
  std::vector<std::string> ks;
  std::vector<std::string> thetas;
  std::vector<std::string> backends;
  std::vector<std::string> seeds;
  std::string density;
  std::string layers;
  BackendFlags flags;

  void run() {
    auto kv = parse_list<std::size_t>(ks.empty() ? std::vector<std::string>{"10"} : ks, "--k");
    auto tv = parse_list<double>(thetas.empty() ? std::vector<std::string>{"0.1"} : thetas, "--theta");
    auto bv = split_list(backends.empty() ? std::vector<std::string>{"markov"} : backends);
    auto sv = parse_list<std::uint64_t>(seeds.empty() ? std::vector<std::string>{"0"} : seeds, "--seeds");
    for (double t : tv) check_theta(t);
    for (const auto& b : bv) {
      if (b != "markov" && b != "htm" && b != "rnn" && b != "registry") {
        throw CLI::ValidationError("--backend: unknown backend '" + b + "'");
      }
    }
    auto tr = load_features(train, layers);
    auto in = load_features(id, layers);
    auto od = load_features(ood, layers);
    std::optional<DensityTable> table;
    if (!density.empty()) table = load_density(density);
    const DensityTable* tp = table ? &*table : nullptr;

    auto f = open_out(out);
    f << "k,theta,backend,seed,auroc,aupr_ood,fpr95,threshold,n_id,n_ood,degenerate,excluded\n";
    for (std::size_t k : kv) {
      for (double theta : tv) {
        auto binarize = [&](const std::vector<FeatureTrajectory>& ts) {
          std::vector<SdrSequence> out;
          for (const auto& t : ts) out.push_back(binarize_lenient(t, tp, theta, k));
          return out;
        };
        auto corpus = binarize(tr);
        auto xs_id = binarize(in);
        auto xs_ood = binarize(od);
        for (const auto& backend : bv) {
          std::vector<ScoredPopulation> ids, oods;
          for (auto seed : sv) {
            Model m = ::train(backend, corpus, flags, seed);
            ids.push_back(io::to_population(score_all(m, xs_id), Role::InDomain));
            oods.push_back(io::to_population(score_all(m, xs_ood), Role::OutOfDomain));
          }
          EvalReport r = evaluate(ids, oods);
          auto row = [&](const std::string& seed, const MetricSet& ms) {
            f << k << ',' << io::format_double(theta) << ',' << backend << ',' << seed << ','
              << io::format_double(ms.auroc) << ',' << io::format_double(ms.aupr_ood_positive)
              << ',' << io::format_double(ms.fpr_at_95_tpr) << ','
              << io::format_double(ms.threshold) << ',' << ms.n_id << ',' << ms.n_ood << ','
              << r.degenerate << ',' << r.excluded << '\n';
          };
          for (std::size_t s = 0; s < sv.size(); ++s) row(std::to_string(sv[s]), r.per_seed[s]);
          row("mean", r.mean);
          std::cerr << "k=" << k << " theta=" << io::format_double(theta) << " " << backend
                    << " auroc " << io::format_double(r.mean.auroc) << '\n';
        }
      }
    }
    finish(f, out);
  }
};

struct ExplainCmd {
  std::string model;
  std::string input;
  std::string out;
  std::vector<std::string> samples;
  std::size_t top = 10;
  std::string labels;
  SelectionFlags sel;

  void run() {
    auto in = open_in(model, true);
    Model m = read_model(in, model);
    const auto* markov = std::get_if<MarkovModel>(&m);
    if (!markov) throw InvalidInput("explain needs a markov model, got " + model_kind(m));
    std::optional<LabelTable> table;
    if (!labels.empty()) {
      auto lf = open_in(labels);
      table = io::read_labels(lf, labels);
    }
    auto xs = load_sequences(input, sel);
    auto f = open_out(out);
    bool header = true;
    std::size_t written = 0;
    for (const auto& x : xs) {
      if (!samples.empty() && std::find(samples.begin(), samples.end(), x.sample_id) == samples.end()) {
        continue;
      }
      auto rows = explain(markov->table, x, top, table ? &*table : nullptr);
      io::write_explain_csv(f, x.sample_id, rows, header);
      header = false;
      ++written;
    }
    if (header) io::write_explain_csv(f, "", {}, true);
    if (!samples.empty() && written != samples.size()) {
      throw InvalidInput("some requested samples are not in " + input);
    }
    finish(f, out);
  }
};

struct SynthCmd {
  PlantedDomainOptions o;
  std::size_t n = 500;
  std::string out;
  bool values = false;
  std::size_t background = 0;

  void run() {
    SyntheticDomainSpec spec = planted_domain(o);
    spec.background = background;
    io::TrajectoryFile file;
    if (values) {
      file = io::to_file(generate_features(spec, n));
    } else {
      file = io::to_file(generate(spec, n));
    }
    file.dim = spec.dim;
    auto f = open_out(out);
    io::write_trajectories(f, file);
    finish(f, out);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SDR trajectory out-of-domain gate"};
  app.set_version_flag("--version", SDRGATE_VERSION);
  app.require_subcommand(1);

  std::function<void()> action;
  std::vector<std::string> outputs;
  CLI::App* active = nullptr;

  auto bind = [&](CLI::App* cmd, auto& state, std::string& out_path) {
    auto* st = &state;
    auto* path = &out_path;
    cmd->callback([&action, &outputs, &active, cmd, st, path] {
      action = [st] { st->run(); };
      outputs = {*path};
      active = cmd;
    });
  };

  EncodeCmd encode;
  auto* c_encode = app.add_subcommand("encode", "Dense activations to SDR trajectories");
  c_encode->add_option("--dense", encode.dense, "Dense activation files (ACTV)")
      ->required()
      ->check(CLI::ExistingFile);
  c_encode->add_option("--encoders", encode.encoders, "SAE encoder file (SAEW)")
      ->check(CLI::ExistingFile);
  c_encode->add_option("--out", encode.out, "Output trajectory file")->required();
  c_encode->add_option("--ids", encode.ids, "Sample ids, one per line")->check(CLI::ExistingFile);
  c_encode->add_option("--id-prefix", encode.id_prefix, "Prefix for generated ids")->capture_default_str();
  c_encode->add_option("--domain", encode.domain, "Domain tag for every record");
  c_encode->add_option("--label", encode.label, "Label for every record");
  c_encode->add_option("--first-layer", encode.first_layer, "Layer id of the first stored layer")
      ->capture_default_str();
  c_encode->add_flag("--bypass-sae", encode.bypass, "Rank raw hidden dimensions, no SAE");
  c_encode->add_flag("--pooled", encode.pooled, "Write pooled values instead of Top-k sets");
  encode.sel.add(c_encode);
  bind(c_encode, encode, encode.out);

  FitCmd fit;
  auto* c_fit = app.add_subcommand("fit", "Train a scorer on in-domain trajectories");
  c_fit->add_option("--backend", fit.backend, "markov, htm, rnn or registry")
      ->check(CLI::IsMember({"markov", "htm", "rnn", "registry"}))
      ->capture_default_str();
  c_fit->add_option("--train", fit.train, "Training trajectories")->required()->check(CLI::ExistingFile);
  c_fit->add_option("--out", fit.out, "Output model file")->required();
  c_fit->add_option("--seed", fit.seed, "Training seed")->capture_default_str();
  fit.sel.add(c_fit);
  fit.flags.add(c_fit);
  bind(c_fit, fit, fit.out);

  ScoreCmd score_cmd;
  auto* c_score = app.add_subcommand("score", "Score trajectories with a trained model");
  c_score->add_option("--model", score_cmd.model, "Model file")->required()->check(CLI::ExistingFile);
  c_score->add_option("--input", score_cmd.input, "Trajectories to score")
      ->required()
      ->check(CLI::ExistingFile);
  c_score->add_option("--out", score_cmd.out, "Output score CSV")->required();
  score_cmd.sel.add(c_score);
  bind(c_score, score_cmd, score_cmd.out);

  EvalCmd eval;
  auto* c_eval = app.add_subcommand("eval", "AUROC, AUPR and FPR@95 from score files");
  c_eval->add_option("--id", eval.id, "In-domain score files, one per seed")
      ->required()
      ->check(CLI::ExistingFile);
  c_eval->add_option("--ood", eval.ood, "Out-of-domain score files, one per seed")
      ->required()
      ->check(CLI::ExistingFile);
  c_eval->add_option("--out", eval.out, "Output report")->required();
  c_eval->add_option("--format", eval.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}))
      ->capture_default_str();
  c_eval->add_option("--id-set", eval.id_set, "Name of the in-domain set")->capture_default_str();
  c_eval->add_option("--ood-set", eval.ood_set, "Name of the out-of-domain set")->capture_default_str();
  c_eval->add_option("--method", eval.method, "Method name for the report");
  c_eval->add_option("--tpr", eval.tpr, "TPR target for the FPR metric")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c_eval->add_option("--quantile", eval.quantile, "ID quantile for the rejection threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  bind(c_eval, eval, eval.out);

  CohesionCmd cohesion;
  auto* c_coh = app.add_subcommand("analyze-cohesion", "Per-layer pairwise Jaccard profile");
  c_coh->add_option("--input", cohesion.input, "Trajectories of one domain")
      ->required()
      ->check(CLI::ExistingFile);
  c_coh->add_option("--out", cohesion.out, "Output CSV")->required();
  c_coh->add_option("--k", cohesion.ks, "Top-k values, comma separated")->delimiter(',');
  c_coh->add_option("--theta", cohesion.thetas, "Density thresholds, comma separated")->delimiter(',');
  c_coh->add_option("--density", cohesion.density, "Density CSV")->check(CLI::ExistingFile);
  c_coh->add_option("--layers", cohesion.layers, "Layer range LO:HI");
  c_coh->add_option("--max-samples", cohesion.max_samples, "Subsample size")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30))
      ->capture_default_str();
  c_coh->add_option("--seed", cohesion.seed, "Subsample seed")->capture_default_str();
  c_coh->add_flag("--zones", cohesion.zones, "Annotate descriptive depth zones");
  bind(c_coh, cohesion, cohesion.out);

  RegistryCmd registry;
  auto* c_reg = app.add_subcommand("analyze-registry", "Layer-wise N-hop registry profile");
  c_reg->add_option("--train", registry.train, "Trajectories that populate the registry")
      ->required()
      ->check(CLI::ExistingFile);
  c_reg->add_option("--input", registry.input, "Trajectories to profile")
      ->required()
      ->check(CLI::ExistingFile);
  c_reg->add_option("--out", registry.out, "Output CSV")->required();
  c_reg->add_option("--hops", registry.hops, "Hop lengths, comma separated")->delimiter(',');
  c_reg->add_option("--normalization", registry.normalization, "induced or registry")
      ->check(CLI::IsMember({"induced", "registry"}))
      ->capture_default_str();
  registry.sel.add(c_reg);
  bind(c_reg, registry, registry.out);

  SweepCmd sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Grid over k, theta and backend on pooled inputs");
  c_sweep->add_option("--train", sweep.train, "Pooled in-domain training trajectories")
      ->required()
      ->check(CLI::ExistingFile);
  c_sweep->add_option("--id", sweep.id, "Pooled in-domain test trajectories")
      ->required()
      ->check(CLI::ExistingFile);
  c_sweep->add_option("--ood", sweep.ood, "Pooled out-of-domain test trajectories")
      ->required()
      ->check(CLI::ExistingFile);
  c_sweep->add_option("--out", sweep.out, "Output CSV")->required();
  c_sweep->add_option("--k", sweep.ks, "Top-k values")->delimiter(',');
  c_sweep->add_option("--theta", sweep.thetas, "Density thresholds")->delimiter(',');
  c_sweep->add_option("--backend", sweep.backends, "Backends")->delimiter(',');
  c_sweep->add_option("--seeds", sweep.seeds, "Training seeds")->delimiter(',');
  c_sweep->add_option("--density", sweep.density, "Density CSV")->check(CLI::ExistingFile);
  c_sweep->add_option("--layers", sweep.layers, "Layer range LO:HI");
  sweep.flags.add(c_sweep);
  bind(c_sweep, sweep, sweep.out);

  ExplainCmd explain_cmd;
  auto* c_explain = app.add_subcommand("explain", "Least likely transitions under a Markov model");
  c_explain->add_option("--model", explain_cmd.model, "Markov model file")
      ->required()
      ->check(CLI::ExistingFile);
  c_explain->add_option("--input", explain_cmd.input, "Trajectories")
      ->required()
      ->check(CLI::ExistingFile);
  c_explain->add_option("--out", explain_cmd.out, "Output CSV")->required();
  c_explain->add_option("--sample", explain_cmd.samples, "Restrict to these sample ids");
  c_explain->add_option("--top", explain_cmd.top, "Rows per sample")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_explain->add_option("--labels", explain_cmd.labels, "Feature label TSV")->check(CLI::ExistingFile);
  explain_cmd.sel.add(c_explain);
  bind(c_explain, explain_cmd, explain_cmd.out);

  SynthCmd synth;
  auto* c_synth = app.add_subcommand("synth", "Synthetic trajectories with planted structure");
  c_synth->add_option("--out", synth.out, "Output trajectory file")->required();
  c_synth->add_option("--n", synth.n, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--dim", synth.o.dim, "Feature space size")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--layers", synth.o.layers, "Number of layers")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--k", synth.o.k, "Active features per layer")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--pool-offset", synth.o.pool_offset, "First feature of each pool")->capture_default_str();
  c_synth->add_option("--pool-size", synth.o.pool_size, "Pool size")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--branching", synth.o.branching, "Successors per feature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_synth->add_option("--noise", synth.o.noise, "Uniform noise rate")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_synth->add_option("--map-seed", synth.o.map_seed, "Transition map seed")->capture_default_str();
  c_synth->add_option("--seed", synth.o.seed, "Sampling seed")->capture_default_str();
  c_synth->add_option("--domain", synth.o.domain, "Domain name and id prefix")->capture_default_str();
  c_synth->add_flag("--values", synth.values, "Emit pooled values instead of active sets");
  c_synth->add_option("--background", synth.background, "Low-valued extra features with --values")
      ->capture_default_str();
  bind(c_synth, synth, synth.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    action();
    write_manifest(*active, outputs);
    return kOk;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const sdrgate::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParse;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const DegenerateInput& e) {
    std::cerr << "degenerate input: " << e.what() << '\n';
    return kValidation;
  } catch (const UndefinedScore& e) {
    std::cerr << "undefined score: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
