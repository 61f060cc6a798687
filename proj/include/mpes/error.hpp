#pragma once

#include <stdexcept>
#include <string>

namespace mpes {

/// Malformed or inconsistent model configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evidence or registry input that cannot be ingested.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise unusable numeric input.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A ratio whose denominator vanished (e.g. no diagnosed cases in a region).
class DegenerateDenominatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prior sampler could not satisfy the constraint set within its budget.
class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mpes
