#include "sdrgate/repr_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdrgate/error.hpp"

namespace sdrgate {

std::span<const float> DenseActivationTensor::layer_block(std::size_t n) const {
  const std::size_t block = tokens * dim;
  return std::span<const float>(values).subspan(n * block, block);
}

void validate(const DenseActivationTensor& tensor) {
  const std::size_t expected = tensor.layers * tensor.tokens * tensor.dim;
  if (tensor.values.size() != expected) {
    throw InvalidInput("activation tensor holds " + std::to_string(tensor.values.size()) +
                       " values, shape requires " + std::to_string(expected));
  }
  if (tensor.token_mask.size() != tensor.tokens) {
    throw InvalidInput("token mask has length " + std::to_string(tensor.token_mask.size()) +
                       ", expected " + std::to_string(tensor.tokens));
  }
  for (auto m : tensor.token_mask) {
    if (m > 1) throw InvalidInput("token mask bytes must be 0 or 1");
  }
  for (float v : tensor.values) {
    if (!std::isfinite(v)) throw InvalidInput("activation tensor holds a non-finite value");
  }
}

void validate(const SaeEncoder& encoder) {
  const auto where = " (encoder for layer " + std::to_string(encoder.layer) + ")";
  if (encoder.input_dim == 0 || encoder.feature_dim == 0) {
    throw InvalidInput("encoder dimensions must be positive" + where);
  }
  if (encoder.feature_dim < encoder.input_dim) {
    throw InvalidInput("encoder feature dim " + std::to_string(encoder.feature_dim) +
                       " is smaller than input dim " + std::to_string(encoder.input_dim) + where);
  }
  if (encoder.weight.size() != encoder.input_dim * encoder.feature_dim) {
    throw InvalidInput("encoder weight has " + std::to_string(encoder.weight.size()) +
                       " entries, expected " +
                       std::to_string(encoder.input_dim * encoder.feature_dim) + where);
  }
  if (encoder.bias.size() != encoder.feature_dim) {
    throw InvalidInput("encoder bias has " + std::to_string(encoder.bias.size()) +
                       " entries, expected " + std::to_string(encoder.feature_dim) + where);
  }
  if (encoder.rectifier == Rectifier::JumpRelu &&
      encoder.thresholds.size() != encoder.feature_dim) {
    throw InvalidInput("JumpReLU encoder needs one threshold per feature" + where);
  }
}

DensityTable::DensityTable(double default_density) : default_density_(default_density) {
  if (!(default_density >= 0.0 && default_density <= 1.0)) {
    throw InvalidInput("default density must lie in [0, 1]");
  }
}

void DensityTable::set(int layer, FeatureIndex feature, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw InvalidInput("density " + std::to_string(rho) + " for layer " + std::to_string(layer) +
                       " feature " + std::to_string(feature) + " outside [0, 1]");
  }
  table_[{layer, feature}] = rho;
}

double DensityTable::density(int layer, FeatureIndex feature) const {
  auto it = table_.find({layer, feature});
  return it == table_.end() ? default_density_ : it->second;
}

bool DensityTable::contains(int layer, FeatureIndex feature) const {
  return table_.count({layer, feature}) != 0;
}

std::vector<SparseRow> encode_sae(const SaeEncoder& encoder, std::span<const float> activations,
                                  std::size_t tokens) {
  validate(encoder);
  const std::size_t d = encoder.input_dim;
  const std::size_t D = encoder.feature_dim;
  if (activations.size() != tokens * d) {
    throw InvalidInput("activations hold " + std::to_string(activations.size()) +
                       " values for " + std::to_string(tokens) + " tokens; encoder for layer " +
                       std::to_string(encoder.layer) + " expects rows of width " +
                       std::to_string(d));
  }

  std::vector<SparseRow> rows(tokens);
  std::vector<double> pre(D);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t j = 0; j < D; ++j) pre[j] = encoder.bias[j];
    const float* h = activations.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double x = h[i];
      if (x == 0.0) continue;
      const float* w = encoder.weight.data() + i * D;
      for (std::size_t j = 0; j < D; ++j) pre[j] += x * static_cast<double>(w[j]);
    }
    auto& row = rows[t];
    for (std::size_t j = 0; j < D; ++j) {
      const double cut = encoder.rectifier == Rectifier::JumpRelu
                             ? std::max(0.0, static_cast<double>(encoder.thresholds[j]))
                             : 0.0;
      if (pre[j] > cut) row.push_back({static_cast<FeatureIndex>(j), pre[j]});
    }
  }
  return rows;
}

SparseFeatureVector pool_tokens(std::span<const SparseRow> rows,
                                std::span<const std::uint8_t> token_mask, int layer,
                                std::size_t dim) {
  if (rows.size() != token_mask.size()) {
    throw InvalidInput("pooling: " + std::to_string(rows.size()) + " rows but mask length " +
                       std::to_string(token_mask.size()));
  }
  std::size_t kept = 0;
  std::vector<FeatureEntry> all;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (token_mask[t] == 0) continue;
    ++kept;
    for (const auto& e : rows[t]) {
      if (e.index >= dim) {
        throw InvalidInput("pooling: feature " + std::to_string(e.index) + " outside [0, " +
                           std::to_string(dim) + ")");
      }
      all.push_back(e);
    }
  }
  if (kept == 0) {
    throw InvalidInput("pooling: token mask has no non-padding position (layer " +
                       std::to_string(layer) + ")");
  }
  std::sort(all.begin(), all.end(), [](const FeatureEntry& a, const FeatureEntry& b) {
    return a.index != b.index ? a.index < b.index : a.value < b.value;
  });

  SparseFeatureVector out{layer, dim, {}};
  const double denom = static_cast<double>(kept);
  for (std::size_t n = 0; n < all.size();) {
    const FeatureIndex j = all[n].index;
    double sum = 0.0;
    for (; n < all.size() && all[n].index == j; ++n) sum += all[n].value;
    const double mean = sum / denom;
    if (mean > 0.0) out.entries.push_back({j, mean});
  }
  return out;
}

SparseFeatureVector apply_density_mask(const SparseFeatureVector& v, const DensityTable& table,
                                       double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw InvalidInput("density threshold must lie in (0, 1], got " + std::to_string(theta));
  }
  SparseFeatureVector out{v.layer, v.dim, {}};
  for (const auto& e : v.entries) {
    if (table.density(v.layer, e.index) <= theta) out.entries.push_back(e);
  }
  return out;
}

ActiveSet topk_binarize(const SparseFeatureVector& v, std::size_t k) {
  if (k == 0) throw InvalidInput("k must be at least 1");
  if (v.entries.empty()) {
    throw DegenerateInput("no positive features left to binarize", v.layer);
  }
  std::vector<FeatureEntry> ranked = v.entries;
  const auto by_strength = [](const FeatureEntry& a, const FeatureEntry& b) {
    return a.value != b.value ? a.value > b.value : a.index < b.index;
  };
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take),
                    ranked.end(), by_strength);
  ActiveSet active(take);
  std::transform(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take),
                 active.begin(), [](const FeatureEntry& e) { return e.index; });
  std::sort(active.begin(), active.end());
  return active;
}

void validate(const PipelineConfig& config) {
  if (config.k == 0) throw InvalidInput("k must be at least 1");
  if (!(config.theta > 0.0 && config.theta <= 1.0)) {
    throw InvalidInput("density threshold must lie in (0, 1], got " +
                       std::to_string(config.theta));
  }
  if (config.layer_range && config.layer_range->hi < config.layer_range->lo) {
    throw InvalidInput("empty layer range " + to_string(*config.layer_range));
  }
}

namespace {

const SaeEncoder& encoder_for(std::span<const SaeEncoder> encoders, int layer) {
  for (const auto& e : encoders) {
    if (e.layer == layer) return e;
  }
  throw InvalidInput("no SAE encoder for layer " + std::to_string(layer));
}

SparseFeatureVector pool_raw(const DenseActivationTensor& sample, std::size_t n, int layer) {
  const auto block = sample.layer_block(n);
  std::vector<double> sum(sample.dim, 0.0);
  std::size_t kept = 0;
  for (std::size_t t = 0; t < sample.tokens; ++t) {
    if (sample.token_mask[t] == 0) continue;
    ++kept;
    for (std::size_t j = 0; j < sample.dim; ++j) sum[j] += block[t * sample.dim + j];
  }
  if (kept == 0) {
    throw InvalidInput("pooling: token mask has no non-padding position (layer " +
                       std::to_string(layer) + ")");
  }
  SparseFeatureVector out{layer, sample.dim, {}};
  for (std::size_t j = 0; j < sample.dim; ++j) {
    const double magnitude = std::abs(sum[j] / static_cast<double>(kept));
    if (magnitude > 0.0) out.entries.push_back({static_cast<FeatureIndex>(j), magnitude});
  }
  return out;
}

}  // namespace

FeatureTrajectory pool_trajectory(const DenseActivationTensor& sample,
                                  std::span<const SaeEncoder> encoders,
                                  const PipelineConfig& config, std::string sample_id) {
  validate(config);
  validate(sample);
  const LayerRange available = sample.layer_range();
  const LayerRange range = config.layer_range.value_or(available);
  if (sample.layers == 0 || !available.contains(range)) {
    throw InvalidInput("layer range " + to_string(range) + " not inside the sample's layers " +
                       to_string(available));
  }

  FeatureTrajectory out;
  out.sample_id = std::move(sample_id);
  for (int layer = range.lo; layer <= range.hi; ++layer) {
    const auto n = static_cast<std::size_t>(layer - sample.first_layer);
    if (config.mode == EncodingMode::RawBypass) {
      out.layers.push_back(pool_raw(sample, n, layer));
      out.dim = sample.dim;
      continue;
    }
    const SaeEncoder& encoder = encoder_for(encoders, layer);
    if (encoder.input_dim != sample.dim) {
      throw InvalidInput("encoder for layer " + std::to_string(layer) + " expects input dim " +
                         std::to_string(encoder.input_dim) + ", activations have " +
                         std::to_string(sample.dim));
    }
    if (out.dim != 0 && out.dim != encoder.feature_dim) {
      throw InvalidInput("encoders disagree on feature dim");
    }
    out.dim = encoder.feature_dim;
    const auto rows = encode_sae(encoder, sample.layer_block(n), sample.tokens);
    out.layers.push_back(pool_tokens(rows, sample.token_mask, layer, encoder.feature_dim));
  }
  return out;
}

SdrSequence binarize_trajectory(const FeatureTrajectory& features, const DensityTable* table,
                                double theta, std::size_t k) {
  SdrSequence seq;
  seq.sample_id = features.sample_id;
  seq.label = features.label;
  seq.domain = features.domain;
  seq.dim = features.dim;
  seq.k = k;
  for (const auto& layer : features.layers) {
    try {
      ActiveSet active = table ? topk_binarize(apply_density_mask(layer, *table, theta), k)
                               : topk_binarize(layer, k);
      seq.layers.push_back({layer.layer, std::move(active)});
    } catch (const DegenerateInput& e) {
      throw e.with_layer(layer.layer).with_sample(features.sample_id);
    }
  }
  return seq;
}

SdrSequence build_trajectory(const DenseActivationTensor& sample,
                             std::span<const SaeEncoder> encoders, const DensityTable& table,
                             const PipelineConfig& config, std::string sample_id) {
  const FeatureTrajectory pooled = pool_trajectory(sample, encoders, config, std::move(sample_id));
  const DensityTable* mask = config.mode == EncodingMode::Sae ? &table : nullptr;
  return binarize_trajectory(pooled, mask, config.theta, config.k);
}

}  // namespace sdrgate
