#include "sdrgate/rnn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <optional>
#include <random>

#include "sdrgate/error.hpp"

namespace sdrgate {

namespace {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMat = Map<const MatrixXd>;
using ConstVec = Map<const VectorXd>;
using Mat = Map<MatrixXd>;
using Vec = Map<VectorXd>;

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

VectorXd sigmoid(const VectorXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Offsets of each tensor inside the flat parameter vector.
struct Layout {
  std::size_t D, h;
  std::size_t embedding, wx, uh, bx, bhn, wo, bo, total;

  Layout(std::size_t dim, std::size_t hidden) : D(dim), h(hidden) {
    embedding = 0;
    wx = embedding + h * D;
    uh = wx + 3 * h * h;
    bx = uh + 3 * h * h;
    bhn = bx + 3 * h;
    wo = bhn + h;
    bo = wo + h * D;
    total = bo + D;
  }
};

/// Read-only views over a parameter (or gradient) vector.
template <typename MatT, typename VecT, typename Ptr>
struct Views {
  MatT E, Wx, Uh;
  VecT bx, bhn;
  MatT Wo;
  VecT bo;

  Views(Ptr p, const Layout& L)
      : E(p + L.embedding, L.h, L.D),
        Wx(p + L.wx, 3 * L.h, L.h),
        Uh(p + L.uh, 3 * L.h, L.h),
        bx(p + L.bx, 3 * L.h),
        bhn(p + L.bhn, L.h),
        Wo(p + L.wo, L.h, L.D),
        bo(p + L.bo, L.D) {}
};
using ParamViews = Views<ConstMat, ConstVec, const double*>;
using GradViews = Views<Mat, Vec, double*>;

/// Forward activations of one step, kept for backpropagation.
struct Step {
  std::size_t input_layer = 0;  ///< index into x.layers of the input set
  VectorXd h_prev, r, z, n, m, h, p;
  bool scored = false;
};

bool step_scored(const SdrSequence& x, std::size_t target) {
  return !x.layers[target - 1].active.empty() && !x.layers[target].active.empty();
}

/// Runs the recurrence over all layers. p holds clamped probabilities.
std::vector<Step> forward(const ParamViews& P, const Layout& L, const SdrSequence& x) {
  const auto h = static_cast<Eigen::Index>(L.h);
  std::vector<Step> steps;
  VectorXd state = VectorXd::Zero(h);
  for (std::size_t t = 1; t < x.layers.size(); ++t) {
    Step s;
    s.input_layer = t - 1;
    s.h_prev = state;
    VectorXd input = VectorXd::Zero(h);
    for (FeatureIndex i : x.layers[t - 1].active) input += P.E.col(i);
    const VectorXd ax = P.Wx * input + P.bx;
    const VectorXd ah = P.Uh * state;
    s.r = sigmoid(VectorXd(ax.segment(0, h) + ah.segment(0, h)));
    s.z = sigmoid(VectorXd(ax.segment(h, h) + ah.segment(h, h)));
    s.m = ah.segment(2 * h, h) + P.bhn;
    s.n = (ax.segment(2 * h, h) + s.r.cwiseProduct(s.m)).array().tanh().matrix();
    s.h = (1.0 - s.z.array()) * s.n.array() + s.z.array() * state.array();
    state = s.h;
    s.scored = step_scored(x, t);
    const VectorXd logits = P.Wo.transpose() * s.h + P.bo;
    s.p = logits.unaryExpr([](double a) {
      return std::clamp(sigmoid(a), kProbabilityClamp, 1.0 - kProbabilityClamp);
    });
    steps.push_back(std::move(s));
  }
  return steps;
}

/// Mean BCE over all bits of one step against the k-hot target.
double step_bce(const VectorXd& p, const ActiveSet& target) {
  double sum = 0.0;
  const auto D = static_cast<std::size_t>(p.size());
  std::size_t next = 0;
  for (std::size_t j = 0; j < D; ++j) {
    const bool on = next < target.size() && target[next] == j;
    if (on) ++next;
    sum -= on ? std::log(p[static_cast<Eigen::Index>(j)])
              : std::log(1.0 - p[static_cast<Eigen::Index>(j)]);
  }
  return sum / static_cast<double>(D);
}

void check_input(const SdrSequence& x, std::size_t dim) {
  validate(x);
  if (x.dim != dim) {
    throw InvalidInput("sample '" + x.sample_id + "' has dim " + std::to_string(x.dim) +
                       ", model has " + std::to_string(dim));
  }
}

/// Per-sequence loss; accumulates `weight` * d(loss)/d(params) into G when given.
double sequence_loss(const ParamViews& P, const Layout& L, const SdrSequence& x, double weight,
                     GradViews* G) {
  const auto steps = forward(P, L, x);
  std::size_t scored = 0;
  for (const auto& s : steps) scored += s.scored ? 1 : 0;
  if (scored == 0) return std::numeric_limits<double>::quiet_NaN();

  double loss = 0.0;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    if (steps[t].scored) loss += step_bce(steps[t].p, x.layers[t + 1].active);
  }
  loss /= static_cast<double>(scored);
  if (!G) return loss;

  const auto h = static_cast<Eigen::Index>(L.h);
  const double step_weight = weight / static_cast<double>(scored) / static_cast<double>(L.D);
  VectorXd dh_next = VectorXd::Zero(h);
  for (std::size_t t = steps.size(); t-- > 0;) {
    const Step& s = steps[t];
    VectorXd dh = dh_next;
    if (s.scored) {
      VectorXd dlogits = s.p;
      for (FeatureIndex j : x.layers[t + 1].active) dlogits[j] -= 1.0;
      for (Eigen::Index j = 0; j < dlogits.size(); ++j) {
        // Clamped outputs carry no gradient.
        if (s.p[j] <= kProbabilityClamp || s.p[j] >= 1.0 - kProbabilityClamp) dlogits[j] = 0.0;
      }
      dlogits *= step_weight;
      G->Wo.noalias() += s.h * dlogits.transpose();
      G->bo += dlogits;
      dh.noalias() += P.Wo * dlogits;
    }
    const VectorXd dn = dh.cwiseProduct((1.0 - s.z.array()).matrix());
    const VectorXd dz = dh.cwiseProduct(s.h_prev - s.n);
    VectorXd dh_prev = dh.cwiseProduct(s.z);

    const VectorXd da_n = dn.array() * (1.0 - s.n.array().square());
    const VectorXd dr = da_n.cwiseProduct(s.m);
    const VectorXd dm = da_n.cwiseProduct(s.r);
    const VectorXd da_z = dz.array() * s.z.array() * (1.0 - s.z.array());
    const VectorXd da_r = dr.array() * s.r.array() * (1.0 - s.r.array());

    VectorXd dax(3 * h);
    dax << da_r, da_z, da_n;
    VectorXd dah(3 * h);
    dah << da_r, da_z, dm;

    VectorXd input = VectorXd::Zero(h);
    for (FeatureIndex i : x.layers[s.input_layer].active) input += P.E.col(i);

    G->Wx.noalias() += dax * input.transpose();
    G->bx += dax;
    G->Uh.noalias() += dah * s.h_prev.transpose();
    G->bhn += dm;
    dh_prev.noalias() += P.Uh.transpose() * dah;
    const VectorXd dinput = P.Wx.transpose() * dax;
    for (FeatureIndex i : x.layers[s.input_layer].active) G->E.col(i) += dinput;
    dh_next = dh_prev;
  }
  return loss;
}

double batch_loss(const std::vector<double>& params, const Layout& L,
                  std::span<const SdrSequence> batch, std::vector<double>* gradient) {
  const ParamViews P(params.data(), L);
  if (gradient) gradient->assign(L.total, 0.0);
  std::size_t used = 0;
  for (const auto& x : batch) {
    if (x.layers.size() >= 2) {
      for (std::size_t t = 1; t < x.layers.size(); ++t) {
        if (step_scored(x, t)) {
          ++used;
          break;
        }
      }
    }
  }
  if (used == 0) return std::numeric_limits<double>::quiet_NaN();
  const double weight = 1.0 / static_cast<double>(used);
  double total = 0.0;
  for (const auto& x : batch) {
    if (x.layers.size() < 2) continue;
    std::optional<GradViews> G;
    if (gradient) G.emplace(gradient->data(), L);
    const double l = sequence_loss(P, L, x, weight, G ? &*G : nullptr);
    if (!std::isnan(l)) total += l;
  }
  return total * weight;
}

}  // namespace

void validate(const RnnHyperparameters& hyper) {
  if (hyper.hidden == 0) throw InvalidInput("hidden width must be >= 1");
  if (hyper.batch_size == 0) throw InvalidInput("batch size must be >= 1");
  if (!(hyper.learning_rate >= 0.0) || !std::isfinite(hyper.learning_rate)) {
    throw InvalidInput("learning rate must be finite and >= 0");
  }
  if (!(hyper.clip_norm >= 0.0)) throw InvalidInput("clip norm must be >= 0");
}

RecurrentPredictor::RecurrentPredictor(std::size_t dim, std::size_t hidden, std::uint64_t seed)
    : dim_(dim), hidden_(hidden) {
  if (dim == 0 || hidden == 0) throw InvalidInput("predictor needs dim >= 1 and hidden >= 1");
  const Layout L(dim, hidden);
  params_.assign(L.total, 0.0);
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t n = 0; n < L.bo; ++n) params_[n] = scale * (2.0 * unit_uniform(rng) - 1.0);
}

RecurrentPredictor RecurrentPredictor::from_parameters(std::size_t dim, std::size_t hidden,
                                                       std::vector<double> parameters) {
  if (dim == 0 || hidden == 0) throw InvalidInput("predictor needs dim >= 1 and hidden >= 1");
  const Layout L(dim, hidden);
  if (parameters.size() != L.total) {
    throw InvalidInput("predictor with dim " + std::to_string(dim) + " and hidden " +
                       std::to_string(hidden) + " needs " + std::to_string(L.total) +
                       " parameters, got " + std::to_string(parameters.size()));
  }
  RecurrentPredictor out;
  out.dim_ = dim;
  out.hidden_ = hidden;
  out.params_ = std::move(parameters);
  if (!out.finite()) throw InvalidInput("predictor parameters must be finite");
  return out;
}

std::vector<ParameterTensor> RecurrentPredictor::layout() const {
  const Layout L(dim_, hidden_);
  return {
      {"embedding", L.h, L.D, L.embedding},
      {"input_gates", 3 * L.h, L.h, L.wx},
      {"recurrent_gates", 3 * L.h, L.h, L.uh},
      {"input_gate_bias", 3 * L.h, 1, L.bx},
      {"recurrent_candidate_bias", L.h, 1, L.bhn},
      {"output_weight", L.h, L.D, L.wo},
      {"output_bias", L.D, 1, L.bo},
  };
}

bool RecurrentPredictor::finite() const noexcept {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

double RecurrentPredictor::loss(std::span<const SdrSequence> batch) const {
  for (const auto& x : batch) check_input(x, dim_);
  return batch_loss(params_, Layout(dim_, hidden_), batch, nullptr);
}

double RecurrentPredictor::loss_and_gradient(std::span<const SdrSequence> batch,
                                             std::vector<double>& gradient) const {
  for (const auto& x : batch) check_input(x, dim_);
  return batch_loss(params_, Layout(dim_, hidden_), batch, &gradient);
}

std::vector<std::vector<double>> RecurrentPredictor::predict(const SdrSequence& x) const {
  check_input(x, dim_);
  const Layout L(dim_, hidden_);
  const ParamViews P(params_.data(), L);
  std::vector<std::vector<double>> out;
  for (const auto& s : forward(P, L, x)) out.emplace_back(s.p.begin(), s.p.end());
  return out;
}

RnnFit rnn_fit(std::span<const SdrSequence> corpus, const RnnHyperparameters& hyper) {
  validate(hyper);
  const LayerRange range = validate_corpus(corpus);
  if (range.width() < 2) throw InvalidInput("training sequences need at least 2 layers");

  RnnFit fit{RecurrentPredictor(corpus.front().dim, hyper.hidden, hyper.seed), hyper, {}};
  auto params = fit.model.mutable_parameters();
  const Layout L(fit.model.dim(), fit.model.hidden());
  std::vector<double> work(params.begin(), params.end());
  std::vector<double> grad, m(L.total, 0.0), v(L.total, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;

  std::mt19937_64 rng(hyper.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(corpus.size());
  std::vector<SdrSequence> batch;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t n = order.size(); n > 1; --n) {
      std::swap(order[n - 1], order[static_cast<std::size_t>(rng() % n)]);
    }
    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      for (std::size_t n = start; n < end; ++n) batch.push_back(corpus[order[n]]);
      const double l = batch_loss(work, L, batch, &grad);
      if (std::isnan(l)) continue;  // nothing scoreable in this batch
      if (!std::isfinite(l)) {
        throw TrainingFailure("training loss became non-finite", static_cast<int>(epoch));
      }
      epoch_sum += l;
      ++epoch_batches;
      if (hyper.clip_norm > 0.0) {
        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        const double norm = std::sqrt(norm2);
        if (norm > hyper.clip_norm) {
          for (double& g : grad) g *= hyper.clip_norm / norm;
        }
      }
      ++t;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      for (std::size_t p = 0; p < L.total; ++p) {
        m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
        v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
        work[p] -= hyper.learning_rate * (m[p] / c1) / (std::sqrt(v[p] / c2) + eps);
      }
    }
    const double mean = epoch_batches ? epoch_sum / static_cast<double>(epoch_batches)
                                      : std::numeric_limits<double>::quiet_NaN();
    if (epoch_batches && !std::all_of(work.begin(), work.end(),
                                      [](double p) { return std::isfinite(p); })) {
      throw TrainingFailure("parameters became non-finite", static_cast<int>(epoch));
    }
    fit.epoch_loss.push_back(mean);
  }
  std::copy(work.begin(), work.end(), params.begin());
  return fit;
}

AnomalyScore rnn_score(const RecurrentPredictor& model, const SdrSequence& x) {
  check_input(x, model.dim());
  if (x.layers.size() < 2) {
    throw InvalidInput("sample '" + x.sample_id + "' has " + std::to_string(x.layers.size()) +
                       " layer(s); scoring needs at least 2");
  }
  const auto probs = model.predict(x);
  AnomalyScore out;
  out.sample_id = x.sample_id;
  for (std::size_t t = 1; t < x.layers.size(); ++t) {
    if (!step_scored(x, t)) {
      out.skipped_layers.push_back(x.layers[t].layer);
      continue;
    }
    const auto& p = probs[t - 1];
    const VectorXd pv = ConstVec(p.data(), static_cast<Eigen::Index>(p.size()));
    out.per_layer.push_back({x.layers[t].layer, step_bce(pv, x.layers[t].active)});
  }
  finalize(out);
  return out;
}

double gradient_check(const RecurrentPredictor& model, std::span<const SdrSequence> batch,
                      double step) {
  if (!model.finite()) throw TrainingFailure("gradient check on non-finite parameters");
  std::vector<double> analytic;
  model.loss_and_gradient(batch, analytic);
  const Layout L(model.dim(), model.hidden());
  std::vector<double> params(model.parameters().begin(), model.parameters().end());
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double saved = params[p];
    params[p] = saved + step;
    const double up = batch_loss(params, L, batch, nullptr);
    params[p] = saved - step;
    const double down = batch_loss(params, L, batch, nullptr);
    params[p] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double diff = std::abs(numeric - analytic[p]);
    // Floor the denominator: central differences at step 1e-5 carry ~1e-11
    // of roundoff, which swamps the relative error of near-zero gradients.
    const double scale = std::max({std::abs(numeric), std::abs(analytic[p]), kGradientScaleFloor});
    const double err = diff / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace sdrgate
