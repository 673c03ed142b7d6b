#pragma once

#include <stdexcept>
#include <string>

namespace psdf {

// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: singular systems, non-finite values, failed
// factorizations (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filter normalization collapsed to zero mass; carries the 1-based step index.
struct ZeroEvidenceError : NumericalError {
  int step;
  explicit ZeroEvidenceError(int step_index)
      : NumericalError("zero evidence at filter step " + std::to_string(step_index)),
        step(step_index) {}
};

// Violated structural precondition (shape/group mismatches, non-PSD inputs).
struct InvariantError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace psdf
