#pragma once

#include <stdexcept>
#include <string>

namespace selfens {

// Each error family maps onto one CLI exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, shape mismatch or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Binary file with the wrong magic, version or length.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite activation, gradient or loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Bias-corrected targets requested for an ensemble row that was never updated.
class StartupError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline int exit_code(const Error& e) {
  if (dynamic_cast<const DivergenceError*>(&e) != nullptr) return 4;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return 3;
  return 2;
}

}  // namespace selfens
