#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icegcn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (non-positive spacing, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: meshes, files, frame sets, splits.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Two connected nodes coincide, so the edge kernel is undefined.
class DegenerateEdgeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Matrix or layer dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Point queried outside the oracle domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Time step violates the transport CFL bound.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or failed numerical check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; carries the epoch at which the loss went non-finite.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(std::size_t epoch)
      : NumericalError("non-finite loss at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  success = 0,
  failure = 1,
  config = 2,
  validation = 3,
  numerical = 4,
};

}  // namespace icegcn
