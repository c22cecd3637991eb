#pragma once

// Activation → SDR trajectory pipeline: SAE encoding, padding-masked token
// pooling, global-density feature masking and Top-k binarization.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdrgate/sdr.hpp"

namespace sdrgate {

/// Hidden states of one input: `layers` x `tokens` x `dim`, layer-major,
/// token-next, dim-innermost. Layer n of the tensor has id first_layer + n.
struct DenseActivationTensor {
  std::size_t layers = 0;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  int first_layer = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> token_mask;  ///< 1 = real token, 0 = padding

  /// Row-major tokens x dim block for tensor layer `n` (not the layer id).
  std::span<const float> layer_block(std::size_t n) const;
  LayerRange layer_range() const {
    return {first_layer, first_layer + static_cast<int>(layers) - 1};
  }
};

/// Throws InvalidInput if the value count does not match the shape, a value
/// is not finite, or a mask byte is not 0/1.
void validate(const DenseActivationTensor& tensor);

enum class Rectifier {
  Relu,      ///< max(0, x)
  JumpRelu,  ///< x if x > threshold_j else 0
};

/// Pretrained layer-specific SAE encoder: z = rectifier(h W + b).
struct SaeEncoder {
  int layer = 0;
  std::size_t input_dim = 0;    ///< d
  std::size_t feature_dim = 0;  ///< D
  std::vector<float> weight;    ///< d x D, row-major
  std::vector<float> bias;      ///< D
  Rectifier rectifier = Rectifier::Relu;
  std::vector<float> thresholds;  ///< D, JumpRelu only
};

void validate(const SaeEncoder& encoder);

struct FeatureEntry {
  FeatureIndex index = 0;
  double value = 0.0;
  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

/// Strictly positive entries of one sparse row, ascending by index.
using SparseRow = std::vector<FeatureEntry>;

struct SparseFeatureVector {
  int layer = 0;
  std::size_t dim = 0;
  SparseRow entries;
  friend bool operator==(const SparseFeatureVector&, const SparseFeatureVector&) = default;
};

/// Pooled (and possibly masked) feature vectors for every layer of one input.
struct FeatureTrajectory {
  std::string sample_id;
  std::optional<std::string> label;
  std::optional<std::string> domain;
  std::size_t dim = 0;
  std::vector<SparseFeatureVector> layers;
  friend bool operator==(const FeatureTrajectory&, const FeatureTrajectory&) = default;
};

/// Per-feature global activation densities. Features missing from the table
/// get `default_density` (0 unless configured, i.e. always kept).
class DensityTable {
 public:
  DensityTable() = default;
  explicit DensityTable(double default_density);

  /// Throws InvalidInput if rho is outside [0, 1].
  void set(int layer, FeatureIndex feature, double rho);
  double density(int layer, FeatureIndex feature) const;
  bool contains(int layer, FeatureIndex feature) const;

  double default_density() const noexcept { return default_density_; }
  std::size_t size() const noexcept { return table_.size(); }
  const std::map<std::pair<int, FeatureIndex>, double>& entries() const noexcept {
    return table_;
  }

 private:
  std::map<std::pair<int, FeatureIndex>, double> table_;
  double default_density_ = 0.0;
};

/// Encodes each of the `tokens` rows of `activations` (tokens x d, row-major).
/// Accumulates pre-activations in double precision.
std::vector<SparseRow> encode_sae(const SaeEncoder& encoder, std::span<const float> activations,
                                  std::size_t tokens);

/// Masked mean over token rows. Per-feature sums are taken over values in
/// sorted order so the result does not depend on token order.
SparseFeatureVector pool_tokens(std::span<const SparseRow> rows,
                                std::span<const std::uint8_t> token_mask, int layer,
                                std::size_t dim);

/// Keeps entry j iff density(layer, j) <= theta. theta must be in (0, 1].
SparseFeatureVector apply_density_mask(const SparseFeatureVector& v, const DensityTable& table,
                                       double theta);

/// Indices of the k largest values, ties broken by lower index, returned
/// ascending. Returns all entries when fewer than k exist.
/// Throws DegenerateInput (with the layer id) when v is empty.
ActiveSet topk_binarize(const SparseFeatureVector& v, std::size_t k);

enum class EncodingMode {
  Sae,        ///< encode → pool → mask → binarize
  RawBypass,  ///< pool raw hidden states, rank by magnitude, binarize
};

struct PipelineConfig {
  std::size_t k = 10;
  double theta = 0.1;
  std::optional<LayerRange> layer_range;  ///< default: every layer of the input
  EncodingMode mode = EncodingMode::Sae;
};

/// Throws InvalidInput unless k >= 1 and theta is in (0, 1].
void validate(const PipelineConfig& config);

/// Encode and pool every layer in range. In RawBypass mode the pooled value of
/// dimension j is |mean_t h_{l,t,j}| and no encoder is needed.
FeatureTrajectory pool_trajectory(const DenseActivationTensor& sample,
                                  std::span<const SaeEncoder> encoders,
                                  const PipelineConfig& config, std::string sample_id = {});

/// Mask and binarize pooled layers. A null table disables density masking.
SdrSequence binarize_trajectory(const FeatureTrajectory& features, const DensityTable* table,
                                double theta, std::size_t k);

/// Full composition for one sample. Density masking is skipped in RawBypass
/// mode. Degenerate layers raise DegenerateInput carrying layer and sample id.
SdrSequence build_trajectory(const DenseActivationTensor& sample,
                             std::span<const SaeEncoder> encoders, const DensityTable& table,
                             const PipelineConfig& config, std::string sample_id = {});

}  // namespace sdrgate
