#pragma once

// Interchange formats between the extractor and the core.
//
//   Trajectory records  line-delimited JSON; first line is a header
//                       {"format":"sdrgate.trajectories","version":1,"dim":D,"k":k}
//   Dense activations   "ACTV" u32 version u32 L u32 T u32 d, T mask bytes,
//                       L*T*d little-endian float32 (layer, token, dim order);
//                       a file may hold several such segments back to back
//   Densities           CSV with header "layer,feature,density"
//   Labels              TSV with header "layer\tfeature\tlabel"; backslash
//                       escapes \t \n \r \\ inside labels
//   SAE encoders        "SAEW" u32 version i32 layer u32 d u32 D u32 rectifier,
//                       d*D weights, D biases [, D thresholds] as float32
//
// Readers reject malformed input with ParseError carrying a byte offset or
// line number; they never repair.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdrgate/cohesion.hpp"
#include "sdrgate/feature_labels.hpp"
#include "sdrgate/markov.hpp"
#include "sdrgate/metrics.hpp"
#include "sdrgate/registry.hpp"
#include "sdrgate/repr_pipeline.hpp"
#include "sdrgate/sdr.hpp"

namespace sdrgate::io {

inline constexpr std::uint32_t kTrajectoryVersion = 1;
inline constexpr std::uint32_t kDenseVersion = 1;
inline constexpr std::uint32_t kEncoderVersion = 1;

struct RecordLayer {
  int layer = 0;
  std::vector<FeatureIndex> indices;
  std::optional<std::vector<double>> values;
  friend bool operator==(const RecordLayer&, const RecordLayer&) = default;
};

struct TrajectoryRecord {
  std::string sample_id;
  std::optional<std::string> label;
  std::optional<std::string> domain;
  std::vector<RecordLayer> layers;
  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

struct TrajectoryFile {
  std::size_t dim = 0;
  std::size_t k = 0;  ///< 0 when records carry pooled values rather than Top-k sets
  std::vector<TrajectoryRecord> records;
  friend bool operator==(const TrajectoryFile&, const TrajectoryFile&) = default;
};

void write_trajectories(std::ostream& out, const TrajectoryFile& file);
TrajectoryFile read_trajectories(std::istream& in, const std::string& source = {});

TrajectoryRecord to_record(const SdrSequence& seq);
TrajectoryRecord to_record(const FeatureTrajectory& features);
TrajectoryFile to_file(const std::vector<SdrSequence>& sequences);
TrajectoryFile to_file(const std::vector<FeatureTrajectory>& trajectories);

/// Records as active sets (values, when present, are ignored).
std::vector<SdrSequence> to_sequences(const TrajectoryFile& file);
/// Records as pooled feature vectors; every layer must carry values.
std::vector<FeatureTrajectory> to_feature_trajectories(const TrajectoryFile& file);
bool has_values(const TrajectoryFile& file);

void write_dense(std::ostream& out, const DenseActivationTensor& tensor);
/// Every segment in the stream; layer ids start at `first_layer`.
std::vector<DenseActivationTensor> read_dense(std::istream& in, int first_layer = 0,
                                              const std::string& source = {});

void write_density(std::ostream& out, const DensityTable& table);
DensityTable read_density(std::istream& in, double default_density = 0.0,
                          const std::string& source = {});

void write_labels(std::ostream& out, const LabelTable& labels);
LabelTable read_labels(std::istream& in, const std::string& source = {});
std::string escape_label(const std::string& label);

void write_encoders(std::ostream& out, const std::vector<SaeEncoder>& encoders);
std::vector<SaeEncoder> read_encoders(std::istream& in, const std::string& source = {});

/// Score table: sample_id,score,skipped_layers,per_layer. Skipped layers are
/// joined by ';', per_layer holds "layer:value" pairs joined by ';'.
/// Unscored samples carry "nan".
void write_scores(std::ostream& out, const std::vector<AnomalyScore>& scores);
std::vector<AnomalyScore> read_scores(std::istream& in, const std::string& source = {});
ScoredPopulation to_population(const std::vector<AnomalyScore>& scores, Role role);

struct ReportContext {
  std::string id_set;
  std::string ood_set;
  std::string method;
};

/// One row per seed plus a "mean" row.
void write_report_csv(std::ostream& out, const ReportContext& ctx, const EvalReport& report,
                      bool header = true);
/// One JSON object per line with the same fields.
void write_report_jsonl(std::ostream& out, const ReportContext& ctx, const EvalReport& report);

/// Plot data: layer,k,theta,mean_jaccard,std_jaccard,n_pairs[,zone].
void write_cohesion_csv(std::ostream& out, const std::vector<CohesionProfile>& profiles,
                        bool annotate_zones = false);
/// Descriptive depth zone for the 26-layer model used in the original study.
std::string depth_zone(int layer);

/// Plot data: start_layer,hop,mean,std,n_samples.
void write_profile_csv(std::ostream& out, const std::vector<ProfileRow>& rows);

void write_explain_csv(std::ostream& out, const std::string& sample_id,
                       const std::vector<TransitionContribution>& rows, bool header = true);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace sdrgate::io
