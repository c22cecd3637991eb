#pragma once

// OOD discrimination metrics. Orientation: higher score = more anomalous,
// OOD is the positive class.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sdrgate {

enum class Role { InDomain, OutOfDomain };

struct ScoredSample {
  std::string sample_id;
  double score = 0.0;       ///< NaN when the sample could not be scored
  bool degenerate = false;  ///< some layers were skipped
};

struct ScoredPopulation {
  Role role = Role::InDomain;
  std::vector<ScoredSample> samples;
};

/// Mann-Whitney estimate: fraction of (ood, id) pairs with ood > id, ties 0.5.
double auroc(std::span<const double> id, std::span<const double> ood);

/// Step-interpolated area under the precision-recall curve, sweeping every
/// distinct score descending (predict OOD iff score >= threshold).
double aupr(std::span<const double> id, std::span<const double> ood);

/// FPR at the largest threshold tau (distinct scores plus -inf) whose
/// TPR = #(ood > tau) / n_ood reaches tpr_target.
double fpr_at_tpr(std::span<const double> id, std::span<const double> ood,
                  double tpr_target = 0.95);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC points from (0,0) to (1,1), one per distinct threshold.
std::vector<RocPoint> roc_curve(std::span<const double> id, std::span<const double> ood);

/// Trapezoidal area under roc_curve; equals auroc() up to rounding.
double auroc_trapezoid(std::span<const double> id, std::span<const double> ood);

/// Nearest-rank q-quantile of the ID scores; the gate rejects iff score > tau.
double calibrate_threshold(std::span<const double> id, double quantile);

inline bool reject(double score, double threshold) { return score > threshold; }

struct MetricSet {
  double auroc = 0.0;
  double aupr_ood_positive = 0.0;
  double fpr_at_95_tpr = 0.0;
  double threshold = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

struct EvalReport {
  MetricSet mean;                   ///< per-seed metrics averaged
  std::vector<MetricSet> per_seed;
  std::size_t degenerate = 0;       ///< scored samples that skipped layers
  std::size_t excluded = 0;         ///< samples without a finite score
  std::vector<std::string> excluded_ids;
};

struct EvalOptions {
  double tpr_target = 0.95;
  double threshold_quantile = 0.95;
};

/// Metrics per seed (id_runs[s] against ood_runs[s]) and their mean.
/// Samples with a non-finite score are excluded and counted.
EvalReport evaluate(std::span<const ScoredPopulation> id_runs,
                    std::span<const ScoredPopulation> ood_runs, const EvalOptions& options = {});

}  // namespace sdrgate
