#pragma once

// Gated recurrent next-layer predictor. The input at layer l-1 is the sum of
// the embeddings of its active features; the output is a per-bit probability
// for layer l trained with binary cross-entropy averaged over all D bits.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdrgate/sdr.hpp"

namespace sdrgate {

/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp].
inline constexpr double kProbabilityClamp = 1e-7;

/// Smallest denominator used by gradient_check's relative error.
inline constexpr double kGradientScaleFloor = 1e-6;

struct RnnHyperparameters {
  std::size_t hidden = 128;
  double learning_rate = 1e-3;  ///< Adam step size
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  ///< global gradient-norm clip; 0 disables

  friend bool operator==(const RnnHyperparameters&, const RnnHyperparameters&) = default;
};

void validate(const RnnHyperparameters& hyper);

/// Named slice of the flat parameter vector. Shapes are (rows, cols) of a
/// column-major matrix; vectors have cols == 1.
struct ParameterTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const noexcept { return rows * cols; }
};

class RecurrentPredictor {
 public:
  /// Seeded uniform(-1/sqrt(h), 1/sqrt(h)) initialization; output bias 0.
  RecurrentPredictor(std::size_t dim, std::size_t hidden, std::uint64_t seed);

  /// Throws InvalidInput when the size does not match the layout or a value
  /// is not finite.
  static RecurrentPredictor from_parameters(std::size_t dim, std::size_t hidden,
                                            std::vector<double> parameters);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::vector<ParameterTensor> layout() const;
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> mutable_parameters() noexcept { return params_; }

  /// Mean over sequences of the mean per-step BCE. Steps whose target or
  /// input layer is empty are skipped.
  double loss(std::span<const SdrSequence> batch) const;

  /// Same loss; writes d(loss)/d(parameters) into `gradient` (resized).
  double loss_and_gradient(std::span<const SdrSequence> batch, std::vector<double>& gradient) const;

  /// Clamped bit probabilities predicted for layers 2..L of `x`.
  std::vector<std::vector<double>> predict(const SdrSequence& x) const;

  bool finite() const noexcept;

  friend bool operator==(const RecurrentPredictor&, const RecurrentPredictor&) = default;

 private:
  RecurrentPredictor() = default;
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

struct RnnFit {
  RecurrentPredictor model;
  RnnHyperparameters hyper;
  std::vector<double> epoch_loss;  ///< mean training loss seen during each epoch
};

/// Mini-batch Adam on the mean per-bit BCE. Throws TrainingFailure with the
/// epoch index when the loss becomes non-finite.
RnnFit rnn_fit(std::span<const SdrSequence> corpus, const RnnHyperparameters& hyper);

/// a_l = mean over D bits of BCE(predicted p_l, s_l); natural log.
AnomalyScore rnn_score(const RecurrentPredictor& model, const SdrSequence& x);

/// Max relative error |a - n| / max(|a|, |n|, kGradientScaleFloor) between
/// analytic gradients and central differences (step `step`) over every
/// parameter. Throws TrainingFailure when the model holds non-finite parameters.
double gradient_check(const RecurrentPredictor& model, std::span<const SdrSequence> batch,
                      double step = 1e-5);

}  // namespace sdrgate
