#pragma once

#include <stdexcept>
#include <string>

namespace hsbnn {

/// Base class for all library errors. `exit_code()` is the process exit status
/// the CLI reports for this error category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Dimension mismatch between inputs.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Index or count outside the permitted range.
class RangeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Input data that cannot be processed (non-finite values, too few rows, ...).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Non-finite intermediate or a diverging optimizer/sampler.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace hsbnn
