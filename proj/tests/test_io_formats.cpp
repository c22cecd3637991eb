#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "sdrgate/error.hpp"
#include "sdrgate/io_formats.hpp"
#include "sdrgate/synth.hpp"
#include "support.hpp"

using namespace sdrgate;
using sdrgate::testing::make_seq;

namespace {

template <class F>
ParseError parse_error(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "expected ParseError";
  return ParseError("none", ParseError::Unit::Line, 0);
}

std::vector<AnomalyScore> sample_scores() {
  AnomalyScore a{"a", {{2, 0.25}, {3, 1.0 / 3.0}}, {}, 0.0};
  finalize(a);
  AnomalyScore b{"b,quoted \"id\"", {{3, 0.5}}, {2}, 0.0};
  finalize(b);
  AnomalyScore c{"c", {}, {2, 3}, 0.0};
  finalize(c);
  return {a, b, c};
}

}  // namespace

TEST(TrajectoryFile, RoundTripSequences) {
  PlantedDomainOptions o;
  o.dim = 64;
  o.k = 5;
  o.pool_size = 12;
  auto seqs = generate(planted_domain(o), 10);
  seqs[3].label = std::nullopt;
  std::stringstream ss;
  io::write_trajectories(ss, io::to_file(seqs));
  auto file = io::read_trajectories(ss);
  EXPECT_EQ(file.dim, 64u);
  EXPECT_EQ(file.k, 5u);
  auto back = io::to_sequences(file);
  ASSERT_EQ(back.size(), seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    EXPECT_EQ(back[i].sample_id, seqs[i].sample_id);
    EXPECT_EQ(back[i].label, seqs[i].label);
    EXPECT_EQ(back[i].domain, seqs[i].domain);
    EXPECT_EQ(back[i].layers, seqs[i].layers);
  }
}

TEST(TrajectoryFile, RoundTripPooledValuesExactly) {
  PlantedDomainOptions o;
  o.dim = 50;
  o.k = 4;
  o.pool_size = 10;
  auto spec = planted_domain(o);
  spec.background = 6;
  auto feats = generate_features(spec, 6);
  std::stringstream ss;
  io::write_trajectories(ss, io::to_file(feats));
  auto file = io::read_trajectories(ss);
  EXPECT_TRUE(io::has_values(file));
  EXPECT_EQ(file.k, 0u);
  EXPECT_EQ(io::to_feature_trajectories(file), feats);
}

TEST(TrajectoryFile, HeaderAndRecordLayout) {
  std::stringstream ss;
  io::write_trajectories(ss, io::to_file(std::vector<SdrSequence>{make_seq("x", 8, {{1, 2}, {3, 4}}, 1, 2)}));
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, R"({"format":"sdrgate.trajectories","version":1,"dim":8,"k":2})");
  std::string rec;
  std::getline(ss, rec);
  EXPECT_EQ(rec.rfind(R"({"sample_id":"x")", 0), 0u);
}

TEST(TrajectoryFile, ErrorsCarryLineNumbers) {
  const std::string header = R"({"format":"sdrgate.trajectories","version":1,"dim":8,"k":2})";
  const std::string good = R"({"sample_id":"a","layers":[{"layer":1,"indices":[1,2]},{"layer":2,"indices":[3]}]})";
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return io::read_trajectories(in, "t.jsonl");
  };
  EXPECT_NO_THROW(read(header + "\n" + good + "\n"));
  struct Case {
    std::string text;
    std::uint64_t line;
  };
  std::vector<Case> cases = {
      {"", 1},
      {R"({"format":"other","version":1,"dim":8})", 1},
      {R"({"format":"sdrgate.trajectories","version":2,"dim":8})", 1},
      {header + "\n" + good + "\n" + good + "\n", 3},  // duplicate sample_id
      {header + "\n" + good + "\nnot json\n", 3},
      {header + "\n" + R"({"sample_id":"b","layers":[{"layer":1,"indices":[9]}]})", 2},
      {header + "\n" + R"({"sample_id":"b","layers":[{"layer":1,"indices":[2,1]}]})", 2},
      {header + "\n" + R"({"sample_id":"b","layers":[{"layer":1,"indices":[1,2,3]}]})", 2},
      {header + "\n" + R"({"sample_id":"b","layers":[{"layer":1,"indices":[1]},{"layer":3,"indices":[1]}]})", 2},
      {header + "\n" + R"({"sample_id":"b","layers":[{"layer":1,"indices":[1],"values":[-1]}]})", 2},
      {header + "\n\n" + R"({"layers":[]})", 3},
  };
  for (const auto& c : cases) {
    auto e = parse_error([&] { read(c.text); });
    EXPECT_EQ(e.unit(), ParseError::Unit::Line) << c.text;
    EXPECT_EQ(e.position(), c.line) << c.text;
    EXPECT_EQ(e.source(), "t.jsonl");
  }
}

TEST(DenseFile, RoundTripSegments) {
  std::mt19937_64 rng(81);
  std::normal_distribution<float> g;
  std::vector<DenseActivationTensor> ts;
  for (std::size_t i = 0; i < 3; ++i) {
    DenseActivationTensor t;
    t.layers = 2 + i;
    t.tokens = 3;
    t.dim = 4;
    t.first_layer = 5;
    t.token_mask = {1, 1, static_cast<std::uint8_t>(i % 2)};
    for (std::size_t v = 0; v < t.layers * t.tokens * t.dim; ++v) t.values.push_back(g(rng));
    ts.push_back(t);
  }
  std::stringstream ss;
  for (const auto& t : ts) io::write_dense(ss, t);
  auto back = io::read_dense(ss, 5);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].layers, ts[i].layers);
    EXPECT_EQ(back[i].first_layer, 5);
    EXPECT_EQ(back[i].token_mask, ts[i].token_mask);
    EXPECT_EQ(std::memcmp(back[i].values.data(), ts[i].values.data(), ts[i].values.size() * 4), 0);
  }
}

TEST(DenseFile, ErrorsCarryByteOffsets) {
  DenseActivationTensor t;
  t.layers = 1;
  t.tokens = 2;
  t.dim = 2;
  t.token_mask = {1, 1};
  t.values = {1, 2, 3, 4};
  std::ostringstream os;
  io::write_dense(os, t);
  const std::string good = os.str();
  ASSERT_EQ(good.size(), 20u + 2u + 16u);
  auto read = [](const std::string& bytes) {
    std::istringstream in(bytes);
    return io::read_dense(in);
  };
  auto check = [&](std::string bytes, std::uint64_t offset) {
    auto e = parse_error([&] { read(bytes); });
    EXPECT_EQ(e.unit(), ParseError::Unit::Byte);
    EXPECT_EQ(e.position(), offset);
  };
  check(good.substr(0, good.size() - 1), 22);  // values truncated
  check(good.substr(0, 10), 8);                // shape truncated
  std::string bad = good;
  bad[0] = 'X';
  check(bad, 0);
  bad = good;
  bad[21] = 7;
  check(bad, 21);
  bad = good;
  bad[4] = 9;
  check(bad, 4);
  float nan = std::numeric_limits<float>::quiet_NaN();
  bad = good;
  std::memcpy(&bad[30], &nan, 4);
  check(bad, 30);
  check(good + "ACT", good.size());  // second segment truncated
  EXPECT_THROW(read(""), ParseError);
}

TEST(DensityFile, RoundTripAndExample) {
  std::istringstream in("layer,feature,density\n3,17,0.042\n3,18,1\n");
  auto table = io::read_density(in, 0.5);
  EXPECT_DOUBLE_EQ(table.density(3, 17), 0.042);
  EXPECT_DOUBLE_EQ(table.density(3, 18), 1.0);
  EXPECT_DOUBLE_EQ(table.density(4, 17), 0.5);
  std::stringstream ss;
  io::write_density(ss, table);
  EXPECT_EQ(ss.str(), "layer,feature,density\n3,17,0.042\n3,18,1\n");
  auto back = io::read_density(ss, 0.5);
  EXPECT_EQ(back.entries(), table.entries());
}

TEST(DensityFile, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    return parse_error([&] {
             std::istringstream in(text);
             io::read_density(in);
           })
        .position();
  };
  EXPECT_EQ(line_of("layer,feature\n"), 1u);
  EXPECT_EQ(line_of("layer,feature,density\n3,17,1.5\n"), 2u);
  EXPECT_EQ(line_of("layer,feature,density\n3,17,0.1\n3,x,0.1\n"), 3u);
  EXPECT_EQ(line_of("layer,feature,density\n3,17,0.1\n3,17,0.2\n"), 3u);
  EXPECT_EQ(line_of("layer,feature,density\n3,17\n"), 2u);
}

TEST(LabelFile, RoundTripWithEscapes) {
  LabelTable labels;
  labels.add(3, 17, "plain");
  labels.add(3, 18, "tab\there, newline\nand back\\slash\r");
  labels.add(20, 0, "");
  std::stringstream ss;
  io::write_labels(ss, labels);
  EXPECT_EQ(io::escape_label("a\tb"), "a\\tb");
  auto back = io::read_labels(ss);
  EXPECT_EQ(back.entries(), labels.entries());
}

TEST(LabelFile, Errors) {
  auto line_of = [](const std::string& text) {
    return parse_error([&] {
             std::istringstream in(text);
             io::read_labels(in);
           })
        .position();
  };
  EXPECT_EQ(line_of("layer,feature,label\n"), 1u);
  EXPECT_EQ(line_of("layer\tfeature\tlabel\n1\t2\tbad\\q\n"), 2u);
  EXPECT_EQ(line_of("layer\tfeature\tlabel\n1\t2\tx\n1\t2\ty\n"), 3u);
  EXPECT_EQ(line_of("layer\tfeature\tlabel\n1\t2\n"), 2u);
}

TEST(EncoderFile, RoundTripAndErrors) {
  SaeEncoder a{2, 3, 4, {}, {}, Rectifier::Relu, {}};
  for (int i = 0; i < 12; ++i) a.weight.push_back(0.5f * static_cast<float>(i) - 2.0f);
  a.bias = {0.1f, -0.2f, 0.3f, 0.0f};
  SaeEncoder b = a;
  b.layer = 3;
  b.rectifier = Rectifier::JumpRelu;
  b.thresholds = {0.5f, 0.5f, 1.0f, 2.0f};
  std::stringstream ss;
  io::write_encoders(ss, {a, b});
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 2 * (24 + 4 * 16) + 16u);
  auto back = io::read_encoders(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].weight, a.weight);
  EXPECT_EQ(back[1].thresholds, b.thresholds);
  EXPECT_EQ(back[1].rectifier, Rectifier::JumpRelu);

  auto offset_of = [](const std::string& data) {
    auto e = parse_error([&] {
      std::istringstream in(data);
      io::read_encoders(in);
    });
    EXPECT_EQ(e.unit(), ParseError::Unit::Byte);
    return e.position();
  };
  EXPECT_EQ(offset_of(bytes.substr(0, 50)), 24u);
  std::string dup;
  {
    std::ostringstream os;
    io::write_encoders(os, {a, a});
    dup = os.str();
  }
  EXPECT_EQ(offset_of(dup), 88u);
  std::string bad = bytes;
  bad[20] = 5;
  EXPECT_EQ(offset_of(bad), 20u);
}

TEST(ScoreFile, RoundTrip) {
  auto scores = sample_scores();
  std::stringstream ss;
  io::write_scores(ss, scores);
  auto text = ss.str();
  EXPECT_NE(text.find("\nc,nan,2;3,\n"), std::string::npos);
  auto back = io::read_scores(ss);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].sample_id, scores[i].sample_id);
    EXPECT_EQ(back[i].per_layer, scores[i].per_layer);
    EXPECT_EQ(back[i].skipped_layers, scores[i].skipped_layers);
  }
  EXPECT_EQ(back[0].aggregate, scores[0].aggregate);
  EXPECT_TRUE(std::isnan(back[2].aggregate));
  auto pop = io::to_population(back, Role::OutOfDomain);
  EXPECT_TRUE(pop.samples[1].degenerate);
  EXPECT_FALSE(pop.samples[0].degenerate);
}

TEST(ScoreFile, Errors) {
  auto line_of = [](const std::string& text) {
    return parse_error([&] {
             std::istringstream in(text);
             io::read_scores(in);
           })
        .position();
  };
  const std::string h = "sample_id,score,skipped_layers,per_layer\n";
  EXPECT_EQ(line_of("id,score\n"), 1u);
  EXPECT_EQ(line_of(h + "a,0.5,,2:0.5\nb,x,,2:1\n"), 3u);
  EXPECT_EQ(line_of(h + "a,nan,,2:0.5\n"), 2u);
  EXPECT_EQ(line_of(h + "a,0.5,,2-0.5\n"), 2u);
  EXPECT_EQ(line_of(h + "\"a,0.5,,\n"), 2u);
}

TEST(Reports, CsvAndJsonl) {
  EvalReport r;
  MetricSet m{0.9, 0.8, 0.1, 1.5, 10, 12};
  r.per_seed = {m, m};
  r.mean = m;
  r.degenerate = 1;
  r.excluded = 2;
  std::ostringstream csv;
  io::write_report_csv(csv, {"id", "ood", "markov"}, r);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "id_set,ood_set,method,seed,auroc,aupr_ood,fpr95,threshold,n_id,n_ood,degenerate,excluded");
  int rows = 0;
  std::string last;
  while (std::getline(lines, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(last, "id,ood,markov,mean,0.9,0.8,0.1,1.5,10,12,1,2");
  std::ostringstream jl;
  io::write_report_jsonl(jl, {"id", "ood", "markov"}, r);
  std::istringstream jlines(jl.str());
  int n = 0;
  while (std::getline(jlines, line)) ++n;
  EXPECT_EQ(n, 3);
}

TEST(PlotData, CohesionZonesAndProfiles) {
  EXPECT_EQ(io::depth_zone(0), "lexical");
  EXPECT_EQ(io::depth_zone(4), "lexical");
  EXPECT_EQ(io::depth_zone(12), "semantic_trunk");
  EXPECT_EQ(io::depth_zone(25), "specific");
  EXPECT_EQ(io::depth_zone(5), "");
  std::ostringstream os;
  io::write_cohesion_csv(os, {CohesionProfile{10, 1.0, 4, 6, {{12, 0.5, 0.1}}}}, true);
  EXPECT_EQ(os.str(), "layer,k,theta,mean_jaccard,std_jaccard,n_pairs,zone\n12,10,1,0.5,0.1,6,semantic_trunk\n");
  std::ostringstream ps;
  io::write_profile_csv(ps, {ProfileRow{3, 1, 0.75, 0.25, 4}});
  EXPECT_EQ(ps.str(), "start_layer,hop,mean,std,n_samples\n3,1,0.75,0.25,4\n");
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(1.0), "1");
  EXPECT_EQ(io::format_double(std::nan("")), "nan");
  std::mt19937_64 rng(82);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    double v = u(rng);
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
}
