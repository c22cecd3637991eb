#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace sdrgate {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the arguments was violated (dimension mismatch,
/// out-of-range parameter, empty corpus, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A sample cannot be represented or scored, e.g. a layer whose feature
/// vector is empty after density masking. Carries the sample and layer
/// when known so batch drivers can flag rather than abort.
class DegenerateInput : public Error {
 public:
  DegenerateInput(const std::string& what, std::optional<int> layer = std::nullopt,
                  std::string sample_id = {});

  std::optional<int> layer() const noexcept { return layer_; }
  const std::string& sample_id() const noexcept { return sample_id_; }

  /// Copy of this error with the sample id attached.
  DegenerateInput with_sample(const std::string& sample_id) const;
  /// Copy of this error with the layer attached.
  DegenerateInput with_layer(int layer) const;

 private:
  std::string message_;
  std::optional<int> layer_;
  std::string sample_id_;
};

/// A score is mathematically undefined for the given arguments
/// (e.g. Jaccard of two empty sets, registry-normalized score with |V| = 0).
class UndefinedScore : public Error {
 public:
  using Error::Error;
};

/// Training diverged or a model holds non-finite parameters.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, std::optional<int> epoch = std::nullopt);
  std::optional<int> epoch() const noexcept { return epoch_; }

 private:
  std::optional<int> epoch_;
};

/// Malformed file contents. `position` is a byte offset for binary formats
/// and a 1-based line number for text formats.
class ParseError : public Error {
 public:
  enum class Unit { Byte, Line };

  ParseError(const std::string& what, Unit unit, std::uint64_t position,
             std::string source = {});

  Unit unit() const noexcept { return unit_; }
  std::uint64_t position() const noexcept { return position_; }
  const std::string& source() const noexcept { return source_; }

 private:
  Unit unit_;
  std::uint64_t position_;
  std::string source_;
};

}  // namespace sdrgate
