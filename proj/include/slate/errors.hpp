#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace slate {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Hyperparameters that cannot produce a valid model or dataset.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Recurrent state does not match the stage it is fed into.
class StateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. backward() on a non-scalar.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN, non-convergence, zero-norm columns and similar.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class QuantizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Malformed or truncated file/payload. offset() is the byte position at
// which parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace slate
