#include "sdrgate/model_file.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <type_traits>

#include <json.hpp>

#include "binary_io.hpp"
#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

using json = nlohmann::ordered_json;
using detail::ByteReader;
using detail::put;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json range_json(const LayerRange& r) { return json::array({r.lo, r.hi}); }

LayerRange range_from(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw InvalidInput("layer_range must be [lo, hi]");
  }
  LayerRange r{j[0].get<int>(), j[1].get<int>()};
  if (r.lo > r.hi) throw InvalidInput("layer_range lo > hi");
  return r;
}

json tm_config_json(const TemporalMemoryConfig& c) {
  json j;
  j["cells_per_column"] = c.cells_per_column;
  j["activation_threshold"] = c.activation_threshold;
  j["min_threshold"] = c.min_threshold;
  j["max_new_synapses"] = c.max_new_synapses;
  j["initial_permanence"] = c.initial_permanence;
  j["connected_permanence"] = c.connected_permanence;
  j["permanence_increment"] = c.permanence_increment;
  j["permanence_decrement"] = c.permanence_decrement;
  j["predicted_segment_decrement"] = c.predicted_segment_decrement;
  j["max_segments_per_cell"] = c.max_segments_per_cell;
  j["max_synapses_per_segment"] = c.max_synapses_per_segment;
  j["seed"] = c.seed;
  return j;
}

TemporalMemoryConfig tm_config_from(const json& j) {
  TemporalMemoryConfig c;
  c.cells_per_column = j.at("cells_per_column").get<std::size_t>();
  c.activation_threshold = j.at("activation_threshold").get<std::size_t>();
  c.min_threshold = j.at("min_threshold").get<std::size_t>();
  c.max_new_synapses = j.at("max_new_synapses").get<std::size_t>();
  c.initial_permanence = j.at("initial_permanence").get<float>();
  c.connected_permanence = j.at("connected_permanence").get<float>();
  c.permanence_increment = j.at("permanence_increment").get<float>();
  c.permanence_decrement = j.at("permanence_decrement").get<float>();
  c.predicted_segment_decrement = j.at("predicted_segment_decrement").get<float>();
  c.max_segments_per_cell = j.at("max_segments_per_cell").get<std::size_t>();
  c.max_synapses_per_segment = j.at("max_synapses_per_segment").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  validate(c);
  return c;
}

json rnn_hyper_json(const RnnHyperparameters& h) {
  json j;
  j["hidden"] = h.hidden;
  j["learning_rate"] = h.learning_rate;
  j["epochs"] = h.epochs;
  j["batch_size"] = h.batch_size;
  j["seed"] = h.seed;
  j["clip_norm"] = h.clip_norm;
  return j;
}

RnnHyperparameters rnn_hyper_from(const json& j) {
  RnnHyperparameters h;
  h.hidden = j.at("hidden").get<std::size_t>();
  h.learning_rate = j.at("learning_rate").get<double>();
  h.epochs = j.at("epochs").get<std::size_t>();
  h.batch_size = j.at("batch_size").get<std::size_t>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.clip_norm = j.at("clip_norm").get<double>();
  validate(h);
  return h;
}

const char* normalization_name(RegistryNormalization n) {
  return n == RegistryNormalization::Registry ? "registry" : "induced";
}

json header_of(const Model& model) {
  json h;
  h["kind"] = model_kind(model);
  h["dim"] = model_dim(model);
  h["layer_range"] = range_json(model_layer_range(model));
  std::visit(overloaded{
                 [&](const MarkovModel& m) { h["alpha"] = m.table.alpha(); },
                 [&](const HtmModel& m) {
                   h["config"] = tm_config_json(m.model.config());
                   h["iteration"] = m.model.iteration();
                   h["rng_state"] = m.model.rng_state();
                   h["epochs"] = m.epochs;
                   h["epoch_train_anomaly"] = m.epoch_train_anomaly;
                 },
                 [&](const RnnModel& m) {
                   h["hyper"] = rnn_hyper_json(m.hyper);
                   h["epoch_loss"] = m.epoch_loss;
                 },
                 [&](const RegistryModel& m) {
                   h["hop"] = m.registry.hop();
                   h["normalization"] = normalization_name(m.normalization);
                 },
             },
             model);
  return h;
}

void write_payload(std::ostream& out, const MarkovModel& m) {
  for (const auto& p : m.table.all_transitions()) {
    put<std::int32_t>(out, p.layer);
    put<std::uint64_t>(out, p.sources.size());
    for (std::size_t r = 0; r < p.sources.size(); ++r) {
      put<std::uint32_t>(out, p.sources[r]);
      put<std::uint64_t>(out, p.marginals[r]);
      put<std::uint64_t>(out, p.row_offsets[r + 1] - p.row_offsets[r]);
      for (std::size_t e = p.row_offsets[r]; e < p.row_offsets[r + 1]; ++e) {
        put<std::uint32_t>(out, p.targets[e]);
        put<std::uint64_t>(out, p.counts[e]);
      }
    }
  }
}

void write_payload(std::ostream& out, const HtmModel& m) {
  auto segs = m.model.segments();
  put<std::uint64_t>(out, segs.size());
  for (const auto& s : segs) {
    put<std::uint32_t>(out, s.cell);
    put<std::uint64_t>(out, s.last_used);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.synapses.size()));
    for (const auto& syn : s.synapses) {
      put<std::uint32_t>(out, syn.presynaptic);
      put<float>(out, syn.permanence);
    }
  }
}

void write_payload(std::ostream& out, const RnnModel& m) {
  auto params = m.model.parameters();
  for (const auto& t : m.model.layout()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    for (std::size_t i = 0; i < t.size(); ++i) put<float>(out, static_cast<float>(params[t.offset + i]));
  }
}

void write_payload(std::ostream& out, const RegistryModel& m) {
  for (int l : m.registry.start_layers()) {
    auto tuples = m.registry.tuples(l);
    put<std::int32_t>(out, l);
    put<std::uint64_t>(out, tuples.size());
    for (const auto& t : tuples) {
      for (FeatureIndex f : t) put<std::uint32_t>(out, f);
    }
  }
}

template <typename T>
T checked_count(ByteReader& r, std::size_t min_bytes_each, const char* what) {
  std::size_t at = r.offset();
  auto n = r.get<T>(what);
  if (min_bytes_each > 0 && n > r.remaining() / min_bytes_each) {
    r.fail(std::string("implausible ") + what, at);
  }
  return n;
}

MarkovModel read_markov(ByteReader& r, const json& h, std::size_t dim, LayerRange range) {
  double alpha = h.at("alpha").get<double>();
  std::vector<LayerTransitions> pairs;
  for (int layer = range.lo + 1; layer <= range.hi; ++layer) {
    std::size_t at = r.offset();
    LayerTransitions p;
    p.layer = r.get<std::int32_t>("layer id");
    if (p.layer != layer) r.fail("expected layer pair ending at " + std::to_string(layer), at);
    auto rows = checked_count<std::uint64_t>(r, 20, "row count");
    if (rows > 0) p.row_offsets.push_back(0);
    for (std::uint64_t i = 0; i < rows; ++i) {
      p.sources.push_back(r.get<std::uint32_t>("source"));
      p.marginals.push_back(r.get<std::uint64_t>("marginal"));
      auto n = checked_count<std::uint64_t>(r, 12, "row length");
      for (std::uint64_t e = 0; e < n; ++e) {
        p.targets.push_back(r.get<std::uint32_t>("target"));
        p.counts.push_back(r.get<std::uint64_t>("count"));
      }
      p.row_offsets.push_back(p.targets.size());
    }
    pairs.push_back(std::move(p));
  }
  return MarkovModel{TransitionTable(dim, alpha, range, std::move(pairs))};
}

HtmModel read_htm(ByteReader& r, const json& h, std::size_t dim, LayerRange range) {
  auto config = tm_config_from(h.at("config"));
  auto n = checked_count<std::uint64_t>(r, 16, "segment count");
  std::vector<TmSegment> segs(n);
  for (auto& s : segs) {
    s.cell = r.get<std::uint32_t>("segment cell");
    s.last_used = r.get<std::uint64_t>("segment last_used");
    auto k = checked_count<std::uint32_t>(r, 8, "synapse count");
    s.synapses.resize(k);
    for (auto& syn : s.synapses) {
      syn.presynaptic = r.get<std::uint32_t>("presynaptic cell");
      syn.permanence = r.get<float>("permanence");
    }
  }
  HtmModel m{TemporalMemory::restore(dim, config, std::move(segs),
                                     h.at("iteration").get<std::uint64_t>(),
                                     h.at("rng_state").get<std::string>()),
             range, h.at("epochs").get<std::size_t>(),
             h.at("epoch_train_anomaly").get<std::vector<double>>()};
  return m;
}

RnnModel read_rnn(ByteReader& r, const json& h, std::size_t dim, LayerRange range) {
  auto hyper = rnn_hyper_from(h.at("hyper"));
  RecurrentPredictor shape(dim, hyper.hidden, 0);
  std::vector<double> params(shape.parameters().size());
  for (const auto& t : shape.layout()) {
    std::size_t at = r.offset();
    auto rows = r.get<std::uint32_t>("tensor rows");
    auto cols = r.get<std::uint32_t>("tensor cols");
    if (rows != t.rows || cols != t.cols) {
      r.fail("tensor " + t.name + " has shape " + std::to_string(rows) + "x" +
                 std::to_string(cols) + ", expected " + std::to_string(t.rows) + "x" +
                 std::to_string(t.cols),
             at);
    }
    for (std::size_t i = 0; i < t.size(); ++i) params[t.offset + i] = r.get<float>("parameter");
  }
  return RnnModel{RecurrentPredictor::from_parameters(dim, hyper.hidden, std::move(params)), hyper,
                  range, h.at("epoch_loss").get<std::vector<double>>()};
}

RegistryModel read_registry(ByteReader& r, const json& h, std::size_t dim, LayerRange range) {
  auto hop = h.at("hop").get<std::size_t>();
  auto norm = h.at("normalization").get<std::string>();
  if (norm != "induced" && norm != "registry") throw InvalidInput("unknown normalization " + norm);
  RegistryModel m{TupleRegistry(hop, dim, range),
                  norm == "registry" ? RegistryNormalization::Registry
                                     : RegistryNormalization::Induced};
  std::vector<FeatureIndex> tuple(hop + 1);
  for (int l : m.registry.start_layers()) {
    std::size_t at = r.offset();
    if (r.get<std::int32_t>("start layer") != l) r.fail("expected start layer " + std::to_string(l), at);
    auto n = checked_count<std::uint64_t>(r, 4 * (hop + 1), "tuple count");
    for (std::uint64_t i = 0; i < n; ++i) {
      at = r.offset();
      for (auto& f : tuple) f = r.get<std::uint32_t>("tuple feature");
      for (auto f : tuple) {
        if (f >= dim) r.fail("tuple feature outside [0, dim)", at);
      }
      m.registry.insert(l, tuple);
    }
  }
  return m;
}

}  // namespace

std::string model_kind(const Model& model) {
  return std::visit(overloaded{
                        [](const MarkovModel&) { return std::string("markov"); },
                        [](const HtmModel&) { return std::string("htm"); },
                        [](const RnnModel&) { return std::string("rnn"); },
                        [](const RegistryModel&) { return std::string("registry"); },
                    },
                    model);
}

std::size_t model_dim(const Model& model) {
  return std::visit(overloaded{
                        [](const MarkovModel& m) { return m.table.dim(); },
                        [](const HtmModel& m) { return m.model.columns(); },
                        [](const RnnModel& m) { return m.model.dim(); },
                        [](const RegistryModel& m) { return m.registry.dim(); },
                    },
                    model);
}

LayerRange model_layer_range(const Model& model) {
  return std::visit(overloaded{
                        [](const MarkovModel& m) { return m.table.layer_range(); },
                        [](const HtmModel& m) { return m.layer_range; },
                        [](const RnnModel& m) { return m.layer_range; },
                        [](const RegistryModel& m) { return m.registry.layer_range(); },
                    },
                    model);
}

AnomalyScore score_with(const Model& model, const SdrSequence& x) {
  if (x.dim != model_dim(model)) {
    throw InvalidInput("sample '" + x.sample_id + "' has dim " + std::to_string(x.dim) +
                       ", model expects " + std::to_string(model_dim(model)));
  }
  if (x.range() != model_layer_range(model)) {
    throw InvalidInput("sample '" + x.sample_id + "' spans layers " + to_string(x.range()) +
                       ", model was trained on " + to_string(model_layer_range(model)));
  }
  return std::visit(overloaded{
                        [&](const MarkovModel& m) { return score(m.table, x); },
                        [&](const HtmModel& m) { return tm_score(m.model, x); },
                        [&](const RnnModel& m) { return rnn_score(m.model, x); },
                        [&](const RegistryModel& m) {
                          return registry_anomaly(m.registry, x, m.normalization);
                        },
                    },
                    model);
}

void write_model(std::ostream& out, const Model& model) {
  std::string header = header_of(model).dump();
  detail::put_bytes(out, "SDRM", 4);
  put<std::uint32_t>(out, kModelFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  detail::put_bytes(out, header.data(), header.size());
  std::visit([&](const auto& m) { write_payload(out, m); }, model);
}

Model read_model(std::istream& in, const std::string& source) {
  auto bytes = detail::slurp(in);
  ByteReader r(bytes, source);
  r.expect_magic("SDRM");
  std::size_t at = r.offset();
  if (r.get<std::uint32_t>("version") != kModelFileVersion) r.fail("unsupported model version", at);
  auto len = r.get<std::uint32_t>("header length");
  std::size_t header_at = r.offset();
  auto text = r.bytes(len, "model header");
  json h = json::parse(text, nullptr, false);
  if (h.is_discarded() || !h.is_object()) r.fail("model header is not a JSON object", header_at);

  std::size_t payload_at = r.offset();
  try {
    auto kind = h.at("kind").get<std::string>();
    auto dim = h.at("dim").get<std::size_t>();
    if (dim == 0) throw InvalidInput("dim must be positive");
    auto range = range_from(h.at("layer_range"));
    Model m = [&]() -> Model {
      if (kind == "markov") return read_markov(r, h, dim, range);
      if (kind == "htm") return read_htm(r, h, dim, range);
      if (kind == "rnn") return read_rnn(r, h, dim, range);
      if (kind == "registry") return read_registry(r, h, dim, range);
      throw InvalidInput("unknown model kind '" + kind + "'");
    }();
    if (!r.done()) r.fail("trailing bytes after model payload");
    return m;
  } catch (const ParseError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad model header: ") + e.what(), header_at);
  } catch (const InvalidInput& e) {
    r.fail(std::string("inconsistent model: ") + e.what(), payload_at);
  }
}

}  // namespace sdrgate
