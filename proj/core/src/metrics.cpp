#include "sdrgate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>

#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

void check_population(std::span<const double> scores, const char* name) {
  if (scores.empty()) throw InvalidInput(std::string(name) + " population is empty");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInput(std::string(name) + " population has a non-finite score");
  }
}

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

/// Number of elements of sorted `v` strictly greater than t.
std::size_t count_above(const std::vector<double>& v, double t) {
  return static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), t));
}

}  // namespace

double auroc(std::span<const double> id, std::span<const double> ood) {
  check_population(id, "ID");
  check_population(ood, "OOD");
  const auto sorted_id = sorted_copy(id);
  // Twice the Mann-Whitney U keeps the tie halves integral.
  std::uint64_t twice_u = 0;
  for (double s : ood) {
    const auto lo = std::lower_bound(sorted_id.begin(), sorted_id.end(), s);
    const auto hi = std::upper_bound(lo, sorted_id.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - sorted_id.begin()) +
               static_cast<std::uint64_t>(hi - lo);
  }
  const std::uint64_t twice_pairs = 2 * static_cast<std::uint64_t>(id.size()) * ood.size();
  // Express the larger half as the complement so auroc(a,b) + auroc(b,a) == 1.
  if (2 * twice_u <= twice_pairs) {
    return static_cast<double>(twice_u) / static_cast<double>(twice_pairs);
  }
  return 1.0 - static_cast<double>(twice_pairs - twice_u) / static_cast<double>(twice_pairs);
}

double aupr(std::span<const double> id, std::span<const double> ood) {
  check_population(id, "ID");
  check_population(ood, "OOD");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(id.size() + ood.size());
  for (double s : id) items.push_back({s, false});
  for (double s : ood) items.push_back({s, true});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

  const double positives = static_cast<double>(ood.size());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t n = 0; n < items.size();) {
    const double t = items[n].score;
    for (; n < items.size() && items[n].score == t; ++n) (items[n].positive ? tp : fp) += 1.0;
    const double recall = tp / positives;
    area += (tp / (tp + fp)) * (recall - prev_recall);
    prev_recall = recall;
  }
  return area;
}

double fpr_at_tpr(std::span<const double> id, std::span<const double> ood, double tpr_target) {
  check_population(id, "ID");
  check_population(ood, "OOD");
  if (!(tpr_target >= 0.0 && tpr_target <= 1.0)) throw InvalidInput("TPR target must lie in [0, 1]");
  const auto sorted_id = sorted_copy(id);
  const auto sorted_ood = sorted_copy(ood);
  std::vector<double> thresholds(sorted_id);
  thresholds.insert(thresholds.end(), sorted_ood.begin(), sorted_ood.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(-std::numeric_limits<double>::infinity());

  const double n_ood = static_cast<double>(ood.size());
  for (double tau : thresholds) {
    if (static_cast<double>(count_above(sorted_ood, tau)) / n_ood >= tpr_target) {
      return static_cast<double>(count_above(sorted_id, tau)) / static_cast<double>(id.size());
    }
  }
  return 1.0;
}

std::vector<RocPoint> roc_curve(std::span<const double> id, std::span<const double> ood) {
  check_population(id, "ID");
  check_population(ood, "OOD");
  const auto sorted_id = sorted_copy(id);
  const auto sorted_ood = sorted_copy(ood);
  std::vector<double> thresholds(sorted_id);
  thresholds.insert(thresholds.end(), sorted_ood.begin(), sorted_ood.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<RocPoint> curve{{0.0, 0.0}};
  for (double t : thresholds) {
    // Predict OOD iff score >= t.
    const auto ge = [t](const std::vector<double>& v) {
      return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t));
    };
    curve.push_back({ge(sorted_id) / static_cast<double>(id.size()),
                     ge(sorted_ood) / static_cast<double>(ood.size())});
  }
  return curve;
}

double auroc_trapezoid(std::span<const double> id, std::span<const double> ood) {
  const auto curve = roc_curve(id, ood);
  double area = 0.0;
  for (std::size_t n = 1; n < curve.size(); ++n) {
    area += (curve[n].fpr - curve[n - 1].fpr) * (curve[n].tpr + curve[n - 1].tpr) / 2.0;
  }
  return area;
}

double calibrate_threshold(std::span<const double> id, double quantile) {
  check_population(id, "ID");
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw InvalidInput("threshold quantile must lie in (0, 1), got " + std::to_string(quantile));
  }
  const auto sorted = sorted_copy(id);
  const double rank = std::ceil(quantile * static_cast<double>(sorted.size()) - 1e-9);
  const auto index = static_cast<std::size_t>(std::max(1.0, rank)) - 1;
  return sorted[std::min(index, sorted.size() - 1)];
}

EvalReport evaluate(std::span<const ScoredPopulation> id_runs,
                    std::span<const ScoredPopulation> ood_runs, const EvalOptions& options) {
  if (id_runs.empty()) throw InvalidInput("evaluation needs at least one seed");
  if (id_runs.size() != ood_runs.size()) {
    throw InvalidInput("ID has " + std::to_string(id_runs.size()) + " seed run(s) but OOD has " +
                       std::to_string(ood_runs.size()));
  }
  EvalReport report;
  const auto collect = [&](const ScoredPopulation& pop, Role expected, const char* name) {
    if (pop.role != expected) throw InvalidInput(std::string(name) + " population has the wrong role");
    std::vector<double> scores;
    for (const auto& s : pop.samples) {
      if (!std::isfinite(s.score)) {
        ++report.excluded;
        report.excluded_ids.push_back(s.sample_id);
        continue;
      }
      if (s.degenerate) ++report.degenerate;
      scores.push_back(s.score);
    }
    if (scores.empty()) {
      std::string msg = std::string(name) + " population has no scoreable sample";
      if (!report.excluded_ids.empty()) msg += " (excluded: " + report.excluded_ids.front() + ", ...)";
      throw InvalidInput(msg);
    }
    return scores;
  };

  for (std::size_t s = 0; s < id_runs.size(); ++s) {
    const auto id = collect(id_runs[s], Role::InDomain, "ID");
    const auto ood = collect(ood_runs[s], Role::OutOfDomain, "OOD");
    MetricSet m;
    m.auroc = auroc(id, ood);
    m.aupr_ood_positive = aupr(id, ood);
    m.fpr_at_95_tpr = fpr_at_tpr(id, ood, options.tpr_target);
    m.threshold = calibrate_threshold(id, options.threshold_quantile);
    m.n_id = id.size();
    m.n_ood = ood.size();
    report.per_seed.push_back(m);
  }
  const double n = static_cast<double>(report.per_seed.size());
  for (const auto& m : report.per_seed) {
    report.mean.auroc += m.auroc / n;
    report.mean.aupr_ood_positive += m.aupr_ood_positive / n;
    report.mean.fpr_at_95_tpr += m.fpr_at_95_tpr / n;
    report.mean.threshold += m.threshold / n;
  }
  report.mean.n_id = report.per_seed.front().n_id;
  report.mean.n_ood = report.per_seed.front().n_ood;
  if (report.per_seed.size() == 1) report.mean = report.per_seed.front();
  return report;
}

}  // namespace sdrgate
