#pragma once

#include <stdexcept>

namespace multicert {

// Error taxonomy mirrored by the CLI exit codes: config=2, data=3, numeric=4.

// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (vote files, schema violations).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric routine left its domain or failed to converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Attack budget incompatible with the modality geometry, e.g. modifying
// more elements than the modality holds.
class InfeasibleBudgetError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace multicert
