#include "sdrgate/io_formats.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <system_error>

#include <json.hpp>

#include "binary_io.hpp"
#include "sdrgate/error.hpp"

namespace sdrgate::io {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using detail::ByteReader;
using detail::put;

constexpr const char* kTrajectoryFormat = "sdrgate.trajectories";

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  /// Next line without the terminator; false at end of input.
  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::uint64_t line() const noexcept { return line_no_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what, ParseError::Unit::Line, std::max<std::uint64_t>(line_no_, 1), source_);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::uint64_t line_no_ = 0;
};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  // Floating point accepts "nan" and "inf"; a leading '+' is rejected.
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && p == last;
}

void write_csv_field(std::ostream& out, const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

/// Splits one CSV line honoring double-quoted fields. Returns false on an
/// unterminated quote.
bool split_csv(const std::string& line, std::vector<std::string>& fields) {
  fields.clear();
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) return false;
  fields.push_back(std::move(cur));
  return true;
}

// --- trajectory records ----------------------------------------------------

ojson record_to_json(const TrajectoryRecord& r) {
  ojson j;
  j["sample_id"] = r.sample_id;
  if (r.label) j["label"] = *r.label;
  if (r.domain) j["domain"] = *r.domain;
  ojson layers = ojson::array();
  for (const auto& l : r.layers) {
    ojson e;
    e["layer"] = l.layer;
    e["indices"] = l.indices;
    if (l.values) e["values"] = *l.values;
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j;
}

std::optional<std::string> optional_string(const json& j, const char* key, LineReader& lr) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) lr.fail(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

TrajectoryRecord record_from_json(const json& j, std::size_t dim, std::size_t k, LineReader& lr) {
  if (!j.is_object()) lr.fail("record must be a JSON object");
  TrajectoryRecord r;
  auto id = j.find("sample_id");
  if (id == j.end() || !id->is_string()) lr.fail("record needs a string 'sample_id'");
  r.sample_id = id->get<std::string>();
  if (r.sample_id.empty()) lr.fail("empty sample_id");
  r.label = optional_string(j, "label", lr);
  r.domain = optional_string(j, "domain", lr);

  auto layers = j.find("layers");
  if (layers == j.end() || !layers->is_array() || layers->empty()) {
    lr.fail("record '" + r.sample_id + "' needs a non-empty 'layers' array");
  }
  for (const auto& e : *layers) {
    if (!e.is_object()) lr.fail("layer entry must be an object");
    auto lid = e.find("layer");
    if (lid == e.end() || !lid->is_number_integer()) lr.fail("layer entry needs an integer 'layer'");
    RecordLayer out;
    out.layer = lid->get<int>();
    if (!r.layers.empty() && out.layer != r.layers.back().layer + 1) {
      lr.fail("layer ids must be contiguous and ascending in '" + r.sample_id + "'");
    }
    auto idx = e.find("indices");
    if (idx == e.end() || !idx->is_array()) lr.fail("layer entry needs an 'indices' array");
    for (const auto& v : *idx) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        lr.fail("feature index must be a non-negative integer");
      }
      std::uint64_t f = v.get<std::uint64_t>();
      if (f >= dim) lr.fail("feature index " + std::to_string(f) + " outside [0, dim)");
      if (!out.indices.empty() && f <= out.indices.back()) {
        lr.fail("indices must be strictly ascending at layer " + std::to_string(out.layer));
      }
      out.indices.push_back(static_cast<FeatureIndex>(f));
    }
    if (k > 0 && out.indices.size() > k) {
      lr.fail("layer " + std::to_string(out.layer) + " holds more than k indices");
    }
    auto vals = e.find("values");
    if (vals != e.end() && !vals->is_null()) {
      if (!vals->is_array() || vals->size() != out.indices.size()) {
        lr.fail("'values' must be an array matching 'indices'");
      }
      std::vector<double> vs;
      vs.reserve(vals->size());
      for (const auto& v : *vals) {
        if (!v.is_number()) lr.fail("value must be a number");
        double x = v.get<double>();
        if (!std::isfinite(x) || x <= 0.0) lr.fail("values must be finite and positive");
        vs.push_back(x);
      }
      out.values = std::move(vs);
    }
    r.layers.push_back(std::move(out));
  }
  return r;
}

// --- misc ------------------------------------------------------------------

void check_header(LineReader& lr, const std::string& expected, const char* what) {
  std::string line;
  if (!lr.next(line)) lr.fail(std::string("empty ") + what + " file");
  if (line != expected) lr.fail(std::string("bad ") + what + " header, expected '" + expected + "'");
}

std::string unescape_label(std::string_view s, LineReader& lr) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 == s.size()) lr.fail("dangling backslash in label");
    switch (s[++i]) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case '\\': out += '\\'; break;
      default: lr.fail("unknown escape in label");
    }
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(v[i]);
  }
  return s;
}

void write_metric_row(std::ostream& out, const ReportContext& ctx, const std::string& seed,
                      const MetricSet& m, const EvalReport& report) {
  write_csv_field(out, ctx.id_set);
  out << ',';
  write_csv_field(out, ctx.ood_set);
  out << ',';
  write_csv_field(out, ctx.method);
  out << ',' << seed << ',' << format_double(m.auroc) << ',' << format_double(m.aupr_ood_positive)
      << ',' << format_double(m.fpr_at_95_tpr) << ',' << format_double(m.threshold) << ','
      << m.n_id << ',' << m.n_ood << ',' << report.degenerate << ',' << report.excluded << '\n';
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

// --- trajectories ----------------------------------------------------------

void write_trajectories(std::ostream& out, const TrajectoryFile& file) {
  if (file.dim == 0) throw InvalidInput("trajectory file needs dim > 0");
  ojson header;
  header["format"] = kTrajectoryFormat;
  header["version"] = kTrajectoryVersion;
  header["dim"] = file.dim;
  header["k"] = file.k;
  out << header.dump() << '\n';
  for (const auto& r : file.records) out << record_to_json(r).dump() << '\n';
}

TrajectoryFile read_trajectories(std::istream& in, const std::string& source) {
  LineReader lr(in, source);
  std::string line;
  if (!lr.next(line)) lr.fail("empty trajectory file");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object()) lr.fail("header is not a JSON object");
  auto fmt = header.find("format");
  if (fmt == header.end() || *fmt != kTrajectoryFormat) {
    lr.fail(std::string("header 'format' must be \"") + kTrajectoryFormat + "\"");
  }
  auto ver = header.find("version");
  if (ver == header.end() || !ver->is_number_unsigned() || *ver != kTrajectoryVersion) {
    lr.fail("unsupported trajectory version");
  }
  auto dim = header.find("dim");
  if (dim == header.end() || !dim->is_number_unsigned() || dim->get<std::uint64_t>() == 0) {
    lr.fail("header needs a positive integer 'dim'");
  }
  TrajectoryFile file;
  file.dim = dim->get<std::size_t>();
  if (auto k = header.find("k"); k != header.end()) {
    if (!k->is_number_unsigned()) lr.fail("header 'k' must be a non-negative integer");
    file.k = k->get<std::size_t>();
  }

  std::set<std::string> seen;
  while (lr.next(line)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) lr.fail("record is not valid JSON");
    TrajectoryRecord r = record_from_json(j, file.dim, file.k, lr);
    if (!seen.insert(r.sample_id).second) lr.fail("duplicate sample_id '" + r.sample_id + "'");
    file.records.push_back(std::move(r));
  }
  return file;
}

TrajectoryRecord to_record(const SdrSequence& seq) {
  TrajectoryRecord r{seq.sample_id, seq.label, seq.domain, {}};
  for (const auto& l : seq.layers) r.layers.push_back({l.layer, l.active, std::nullopt});
  return r;
}

TrajectoryRecord to_record(const FeatureTrajectory& features) {
  TrajectoryRecord r{features.sample_id, features.label, features.domain, {}};
  for (const auto& l : features.layers) {
    RecordLayer out{l.layer, {}, std::vector<double>{}};
    for (const auto& e : l.entries) {
      out.indices.push_back(e.index);
      out.values->push_back(e.value);
    }
    r.layers.push_back(std::move(out));
  }
  return r;
}

TrajectoryFile to_file(const std::vector<SdrSequence>& sequences) {
  TrajectoryFile f;
  if (!sequences.empty()) {
    f.dim = sequences.front().dim;
    f.k = sequences.front().k;
  }
  for (const auto& s : sequences) {
    if (s.dim != f.dim) throw InvalidInput("sequences disagree on dim");
    if (s.k != f.k) f.k = 0;  // mixed sparsities
    f.records.push_back(to_record(s));
  }
  return f;
}

TrajectoryFile to_file(const std::vector<FeatureTrajectory>& trajectories) {
  TrajectoryFile f;
  if (!trajectories.empty()) f.dim = trajectories.front().dim;
  for (const auto& t : trajectories) {
    if (t.dim != f.dim) throw InvalidInput("trajectories disagree on dim");
    f.records.push_back(to_record(t));
  }
  return f;
}

bool has_values(const TrajectoryFile& file) {
  for (const auto& r : file.records) {
    for (const auto& l : r.layers) {
      if (!l.values) return false;
    }
  }
  return !file.records.empty();
}

std::vector<SdrSequence> to_sequences(const TrajectoryFile& file) {
  std::vector<SdrSequence> out;
  out.reserve(file.records.size());
  for (const auto& r : file.records) {
    SdrSequence s;
    s.sample_id = r.sample_id;
    s.label = r.label;
    s.domain = r.domain;
    s.dim = file.dim;
    s.k = file.k;
    for (const auto& l : r.layers) s.layers.push_back({l.layer, l.indices});
    validate(s);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FeatureTrajectory> to_feature_trajectories(const TrajectoryFile& file) {
  std::vector<FeatureTrajectory> out;
  out.reserve(file.records.size());
  for (const auto& r : file.records) {
    FeatureTrajectory t{r.sample_id, r.label, r.domain, file.dim, {}};
    for (const auto& l : r.layers) {
      if (!l.values) {
        throw InvalidInput("record '" + r.sample_id + "' layer " + std::to_string(l.layer) +
                           " carries no values");
      }
      SparseFeatureVector v{l.layer, file.dim, {}};
      for (std::size_t i = 0; i < l.indices.size(); ++i) {
        v.entries.push_back({l.indices[i], (*l.values)[i]});
      }
      t.layers.push_back(std::move(v));
    }
    out.push_back(std::move(t));
  }
  return out;
}

// --- dense activations -----------------------------------------------------

void write_dense(std::ostream& out, const DenseActivationTensor& tensor) {
  validate(tensor);
  detail::put_bytes(out, "ACTV", 4);
  put<std::uint32_t>(out, kDenseVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.layers));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.tokens));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dim));
  detail::put_bytes(out, tensor.token_mask.data(), tensor.token_mask.size());
  for (float v : tensor.values) put<float>(out, v);
}

std::vector<DenseActivationTensor> read_dense(std::istream& in, int first_layer,
                                              const std::string& source) {
  auto bytes = detail::slurp(in);
  ByteReader r(bytes, source);
  std::vector<DenseActivationTensor> out;
  if (r.done()) r.fail("empty activation file");
  while (!r.done()) {
    r.expect_magic("ACTV");
    std::size_t at = r.offset();
    if (r.get<std::uint32_t>("version") != kDenseVersion) r.fail("unsupported version", at);
    DenseActivationTensor t;
    t.first_layer = first_layer;
    at = r.offset();
    t.layers = r.get<std::uint32_t>("layer count");
    t.tokens = r.get<std::uint32_t>("token count");
    t.dim = r.get<std::uint32_t>("hidden size");
    if (t.layers == 0 || t.tokens == 0 || t.dim == 0) r.fail("zero dimension in shape", at);
    r.need(t.tokens, "token mask");
    t.token_mask.resize(t.tokens);
    for (std::size_t i = 0; i < t.tokens; ++i) {
      std::size_t pos = r.offset();
      auto m = r.get<std::uint8_t>("token mask");
      if (m > 1) r.fail("token mask byte must be 0 or 1", pos);
      t.token_mask[i] = m;
    }
    std::uint64_t n = static_cast<std::uint64_t>(t.layers) * t.tokens * t.dim;
    if (n > r.remaining() / 4) r.fail("truncated activation values");
    t.values.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::size_t pos = r.offset();
      float v = r.get<float>("activation value");
      if (!std::isfinite(v)) r.fail("non-finite activation value", pos);
      t.values[i] = v;
    }
    out.push_back(std::move(t));
  }
  return out;
}

// --- densities -------------------------------------------------------------

void write_density(std::ostream& out, const DensityTable& table) {
  out << "layer,feature,density\n";
  for (const auto& [key, rho] : table.entries()) {
    out << key.first << ',' << key.second << ',' << format_double(rho) << '\n';
  }
}

DensityTable read_density(std::istream& in, double default_density, const std::string& source) {
  LineReader lr(in, source);
  check_header(lr, "layer,feature,density", "density");
  DensityTable table(default_density);
  std::string line;
  while (lr.next(line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 3) lr.fail("expected 3 fields");
    int layer = 0;
    FeatureIndex feature = 0;
    double rho = 0.0;
    if (!parse_number(f[0], layer)) lr.fail("bad layer id");
    if (!parse_number(f[1], feature)) lr.fail("bad feature index");
    if (!parse_number(f[2], rho) || !(rho >= 0.0 && rho <= 1.0)) {
      lr.fail("density must be a number in [0, 1]");
    }
    if (table.contains(layer, feature)) lr.fail("duplicate (layer, feature)");
    table.set(layer, feature, rho);
  }
  return table;
}

// --- labels ----------------------------------------------------------------

std::string escape_label(const std::string& label) {
  std::string out;
  out.reserve(label.size());
  for (char c : label) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

void write_labels(std::ostream& out, const LabelTable& labels) {
  out << "layer\tfeature\tlabel\n";
  for (const auto& [key, label] : labels.entries()) {
    out << key.first << '\t' << key.second << '\t' << escape_label(label) << '\n';
  }
}

LabelTable read_labels(std::istream& in, const std::string& source) {
  LineReader lr(in, source);
  check_header(lr, "layer\tfeature\tlabel", "label");
  LabelTable table;
  std::string line;
  while (lr.next(line)) {
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 3) lr.fail("expected 3 tab-separated fields");
    int layer = 0;
    FeatureIndex feature = 0;
    if (!parse_number(f[0], layer)) lr.fail("bad layer id");
    if (!parse_number(f[1], feature)) lr.fail("bad feature index");
    if (table.find(layer, feature)) lr.fail("duplicate (layer, feature)");
    table.add(layer, feature, unescape_label(f[2], lr));
  }
  return table;
}

// --- SAE encoders ----------------------------------------------------------

void write_encoders(std::ostream& out, const std::vector<SaeEncoder>& encoders) {
  for (const auto& e : encoders) {
    validate(e);
    detail::put_bytes(out, "SAEW", 4);
    put<std::uint32_t>(out, kEncoderVersion);
    put<std::int32_t>(out, e.layer);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.input_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.feature_dim));
    put<std::uint32_t>(out, e.rectifier == Rectifier::JumpRelu ? 1u : 0u);
    for (float v : e.weight) put<float>(out, v);
    for (float v : e.bias) put<float>(out, v);
    if (e.rectifier == Rectifier::JumpRelu) {
      for (float v : e.thresholds) put<float>(out, v);
    }
  }
}

std::vector<SaeEncoder> read_encoders(std::istream& in, const std::string& source) {
  auto bytes = detail::slurp(in);
  ByteReader r(bytes, source);
  if (r.done()) r.fail("empty encoder file");
  std::vector<SaeEncoder> out;
  while (!r.done()) {
    std::size_t start = r.offset();
    r.expect_magic("SAEW");
    std::size_t at = r.offset();
    if (r.get<std::uint32_t>("version") != kEncoderVersion) r.fail("unsupported version", at);
    SaeEncoder e;
    e.layer = r.get<std::int32_t>("layer id");
    at = r.offset();
    e.input_dim = r.get<std::uint32_t>("input dim");
    e.feature_dim = r.get<std::uint32_t>("feature dim");
    if (e.input_dim == 0 || e.feature_dim == 0) r.fail("zero encoder dimension", at);
    at = r.offset();
    auto rect = r.get<std::uint32_t>("rectifier");
    if (rect > 1) r.fail("unknown rectifier", at);
    e.rectifier = rect == 1 ? Rectifier::JumpRelu : Rectifier::Relu;
    std::uint64_t n = static_cast<std::uint64_t>(e.input_dim) * e.feature_dim;
    std::uint64_t total = n + e.feature_dim * (rect == 1 ? 2u : 1u);
    if (total > r.remaining() / 4) r.fail("truncated encoder weights");
    auto read_floats = [&](std::vector<float>& dst, std::uint64_t count) {
      dst.resize(count);
      for (auto& v : dst) {
        std::size_t pos = r.offset();
        v = r.get<float>("encoder weight");
        if (!std::isfinite(v)) r.fail("non-finite encoder weight", pos);
      }
    };
    read_floats(e.weight, n);
    read_floats(e.bias, e.feature_dim);
    if (rect == 1) read_floats(e.thresholds, e.feature_dim);
    for (const auto& prev : out) {
      if (prev.layer == e.layer) r.fail("duplicate encoder for layer " + std::to_string(e.layer), start);
    }
    out.push_back(std::move(e));
  }
  return out;
}

// --- scores ----------------------------------------------------------------

void write_scores(std::ostream& out, const std::vector<AnomalyScore>& scores) {
  out << "sample_id,score,skipped_layers,per_layer\n";
  for (const auto& s : scores) {
    write_csv_field(out, s.sample_id);
    out << ',' << format_double(s.aggregate) << ',' << join_ints(s.skipped_layers) << ',';
    for (std::size_t i = 0; i < s.per_layer.size(); ++i) {
      if (i) out << ';';
      out << s.per_layer[i].layer << ':' << format_double(s.per_layer[i].value);
    }
    out << '\n';
  }
}

std::vector<AnomalyScore> read_scores(std::istream& in, const std::string& source) {
  LineReader lr(in, source);
  check_header(lr, "sample_id,score,skipped_layers,per_layer", "score");
  std::vector<AnomalyScore> out;
  std::string line;
  std::vector<std::string> f;
  while (lr.next(line)) {
    if (line.empty()) continue;
    if (!split_csv(line, f)) lr.fail("unterminated quoted field");
    if (f.size() != 4) lr.fail("expected 4 fields");
    AnomalyScore s;
    s.sample_id = f[0];
    if (s.sample_id.empty()) lr.fail("empty sample_id");
    if (!parse_number(std::string_view(f[1]), s.aggregate)) lr.fail("bad score");
    if (!f[2].empty()) {
      for (auto part : split(f[2], ';')) {
        int layer = 0;
        if (!parse_number(part, layer)) lr.fail("bad skipped layer");
        s.skipped_layers.push_back(layer);
      }
    }
    if (!f[3].empty()) {
      for (auto part : split(f[3], ';')) {
        auto colon = part.find(':');
        if (colon == std::string_view::npos) lr.fail("per-layer entry must be layer:value");
        LayerAnomaly a;
        if (!parse_number(part.substr(0, colon), a.layer) ||
            !parse_number(part.substr(colon + 1), a.value)) {
          lr.fail("bad per-layer entry");
        }
        s.per_layer.push_back(a);
      }
    }
    if (s.per_layer.empty() != std::isnan(s.aggregate)) {
      lr.fail("score must be nan exactly when no layer was scored");
    }
    out.push_back(std::move(s));
  }
  return out;
}

ScoredPopulation to_population(const std::vector<AnomalyScore>& scores, Role role) {
  ScoredPopulation pop{role, {}};
  pop.samples.reserve(scores.size());
  for (const auto& s : scores) pop.samples.push_back({s.sample_id, s.aggregate, s.degenerate()});
  return pop;
}

// --- reports ---------------------------------------------------------------

void write_report_csv(std::ostream& out, const ReportContext& ctx, const EvalReport& report,
                      bool header) {
  if (header) {
    out << "id_set,ood_set,method,seed,auroc,aupr_ood,fpr95,threshold,n_id,n_ood,degenerate,"
           "excluded\n";
  }
  for (std::size_t s = 0; s < report.per_seed.size(); ++s) {
    write_metric_row(out, ctx, std::to_string(s), report.per_seed[s], report);
  }
  write_metric_row(out, ctx, "mean", report.mean, report);
}

void write_report_jsonl(std::ostream& out, const ReportContext& ctx, const EvalReport& report) {
  auto row = [&](const std::string& seed, const MetricSet& m) {
    ojson j;
    j["id_set"] = ctx.id_set;
    j["ood_set"] = ctx.ood_set;
    j["method"] = ctx.method;
    j["seed"] = seed;
    j["auroc"] = m.auroc;
    j["aupr_ood"] = m.aupr_ood_positive;
    j["fpr95"] = m.fpr_at_95_tpr;
    j["threshold"] = m.threshold;
    j["n_id"] = m.n_id;
    j["n_ood"] = m.n_ood;
    j["degenerate"] = report.degenerate;
    j["excluded"] = report.excluded;
    out << j.dump() << '\n';
  };
  for (std::size_t s = 0; s < report.per_seed.size(); ++s) row(std::to_string(s), report.per_seed[s]);
  row("mean", report.mean);
}

std::string depth_zone(int layer) {
  if (layer >= 0 && layer <= 4) return "lexical";
  if (layer >= 6 && layer <= 18) return "semantic_trunk";
  if (layer >= 20 && layer <= 25) return "specific";
  return "";
}

void write_cohesion_csv(std::ostream& out, const std::vector<CohesionProfile>& profiles,
                        bool annotate_zones) {
  out << "layer,k,theta,mean_jaccard,std_jaccard,n_pairs";
  if (annotate_zones) out << ",zone";
  out << '\n';
  for (const auto& p : profiles) {
    for (const auto& l : p.layers) {
      out << l.layer << ',' << p.k << ',' << format_double(p.theta) << ',' << format_double(l.mean)
          << ',' << format_double(l.stddev) << ',' << p.pairs;
      if (annotate_zones) out << ',' << depth_zone(l.layer);
      out << '\n';
    }
  }
}

void write_profile_csv(std::ostream& out, const std::vector<ProfileRow>& rows) {
  out << "start_layer,hop,mean,std,n_samples\n";
  for (const auto& r : rows) {
    out << r.start_layer << ',' << r.hop << ',' << format_double(r.mean) << ','
        << format_double(r.stddev) << ',' << r.samples << '\n';
  }
}

void write_explain_csv(std::ostream& out, const std::string& sample_id,
                       const std::vector<TransitionContribution>& rows, bool header) {
  if (header) {
    out << "sample_id,rank,source_layer,target_layer,source,target,probability,neg_log_p,"
           "source_label,target_label\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    write_csv_field(out, sample_id);
    out << ',' << i + 1 << ',' << r.source_layer << ',' << r.target_layer << ',' << r.source << ','
        << r.target << ',' << format_double(r.probability) << ',' << format_double(r.contribution)
        << ',';
    write_csv_field(out, r.source_label.value_or(""));
    out << ',';
    write_csv_field(out, r.target_label.value_or(""));
    out << '\n';
  }
}

}  // namespace sdrgate::io
