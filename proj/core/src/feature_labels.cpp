#include "sdrgate/feature_labels.hpp"

#include "sdrgate/error.hpp"

namespace sdrgate {

void LabelTable::add(int layer, FeatureIndex feature, std::string label) {
  auto [it, inserted] = labels_.try_emplace({layer, feature}, std::move(label));
  if (!inserted) {
    throw InvalidInput("duplicate label for layer " + std::to_string(layer) + " feature " +
                       std::to_string(feature));
  }
}

std::optional<std::string> LabelTable::find(int layer, FeatureIndex feature) const {
  auto it = labels_.find({layer, feature});
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

}  // namespace sdrgate
