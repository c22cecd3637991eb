#pragma once

// Trained scorer persistence.
//
//   "SDRM" u32 version u32 header_length, header_length bytes of JSON
//   (kind, dim, layer range, hyperparameters, training curves), then a
//   little-endian binary payload whose layout depends on the kind:
//
//   markov    per layer pair: i32 layer u64 rows, then per row
//             u32 source u64 marginal u64 entries and entries x (u32 target u64 count)
//   htm       u64 segments, then per segment u32 cell u64 last_used u32 synapses
//             and synapses x (u32 presynaptic f32 permanence)
//   rnn       per layout tensor: u32 rows u32 cols, rows*cols f32 column-major
//             (parameters are trained in double and rounded to float on save)
//   registry  per start layer: i32 layer u64 tuples, tuples x (hop+1) u32 features

#include <cstddef>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "sdrgate/htm.hpp"
#include "sdrgate/markov.hpp"
#include "sdrgate/registry.hpp"
#include "sdrgate/rnn.hpp"
#include "sdrgate/sdr.hpp"

namespace sdrgate {

inline constexpr std::uint32_t kModelFileVersion = 1;

struct MarkovModel {
  TransitionTable table;
};

struct HtmModel {
  TemporalMemory model;
  LayerRange layer_range;
  std::size_t epochs = 0;
  std::vector<double> epoch_train_anomaly;
};

struct RnnModel {
  RecurrentPredictor model;
  RnnHyperparameters hyper;
  LayerRange layer_range;
  std::vector<double> epoch_loss;
};

struct RegistryModel {
  TupleRegistry registry;
  RegistryNormalization normalization = RegistryNormalization::Induced;
};

using Model = std::variant<MarkovModel, HtmModel, RnnModel, RegistryModel>;

/// "markov", "htm", "rnn" or "registry".
std::string model_kind(const Model& model);
std::size_t model_dim(const Model& model);
LayerRange model_layer_range(const Model& model);

/// Anomaly score of one trajectory under any stored model.
AnomalyScore score_with(const Model& model, const SdrSequence& x);

void write_model(std::ostream& out, const Model& model);
Model read_model(std::istream& in, const std::string& source = {});

}  // namespace sdrgate
