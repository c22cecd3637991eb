#include "sdrgate/error.hpp"

#include <utility>

namespace sdrgate {

namespace {

std::string degenerate_message(const std::string& what, std::optional<int> layer,
                               const std::string& sample_id) {
  std::string msg = what;
  if (layer) msg += " (layer " + std::to_string(*layer) + ")";
  if (!sample_id.empty()) msg += " [sample " + sample_id + "]";
  return msg;
}

std::string parse_message(const std::string& what, ParseError::Unit unit,
                          std::uint64_t position, const std::string& source) {
  std::string msg;
  if (!source.empty()) msg += source + ":";
  msg += unit == ParseError::Unit::Byte ? "byte " : "line ";
  msg += std::to_string(position) + ": " + what;
  return msg;
}

}  // namespace

DegenerateInput::DegenerateInput(const std::string& what, std::optional<int> layer,
                                 std::string sample_id)
    : Error(degenerate_message(what, layer, sample_id)),
      message_(what),
      layer_(layer),
      sample_id_(std::move(sample_id)) {}

DegenerateInput DegenerateInput::with_sample(const std::string& sample_id) const {
  return DegenerateInput(message_, layer_, sample_id);
}

DegenerateInput DegenerateInput::with_layer(int layer) const {
  return DegenerateInput(message_, layer, sample_id_);
}

TrainingFailure::TrainingFailure(const std::string& what, std::optional<int> epoch)
    : Error(epoch ? what + " (epoch " + std::to_string(*epoch) + ")" : what), epoch_(epoch) {}

ParseError::ParseError(const std::string& what, Unit unit, std::uint64_t position,
                       std::string source)
    : Error(parse_message(what, unit, position, source)),
      unit_(unit),
      position_(position),
      source_(std::move(source)) {}

}  // namespace sdrgate
