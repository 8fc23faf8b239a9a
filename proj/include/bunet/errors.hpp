#pragma once

#include <stdexcept>
#include <string>

namespace bunet {

/// Invalid configuration: bad hyperparameters, inconsistent graph shapes,
/// unknown ids. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch detected while a graph is being built.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Unreadable, malformed or corrupt input data. Maps to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// MetaImage header problem; `key()` names the offending header key.
class MhdParseError : public DataError {
 public:
  MhdParseError(std::string key, const std::string& what)
      : DataError(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// NaN/Inf in a loss or gradient. Maps to exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. backward() before forward().
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A metric that has no value for the given input (e.g. Hausdorff distance
/// of an empty volume). Distinct from computation failures.
class MetricUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace bunet
