#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "sdrgate/sdr.hpp"

namespace sdrgate {

/// Human-readable descriptions of SAE features keyed by (layer, feature).
class LabelTable {
 public:
  /// Throws InvalidInput on a duplicate key.
  void add(int layer, FeatureIndex feature, std::string label);
  std::optional<std::string> find(int layer, FeatureIndex feature) const;
  std::size_t size() const noexcept { return labels_.size(); }
  const std::map<std::pair<int, FeatureIndex>, std::string>& entries() const noexcept {
    return labels_;
  }

 private:
  std::map<std::pair<int, FeatureIndex>, std::string> labels_;
};

}  // namespace sdrgate
