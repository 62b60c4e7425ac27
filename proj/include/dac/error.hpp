#pragma once

#include <stdexcept>
#include <string>

namespace dac {

/// Precondition violated by the caller (bad dimensions, out-of-range indices, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (factorization, singular system, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File or stream failure; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network training failed; carries the epoch at which it happened.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  [[nodiscard]] int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace dac
