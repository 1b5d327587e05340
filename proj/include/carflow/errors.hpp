#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace carflow {

/// Malformed or inconsistent configuration (bad dims, unknown enum, missing field).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape mismatch between tensors/params that should agree.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered where finite values are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training diverged or otherwise failed irrecoverably.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Constraint target has (numerically) zero posterior mass.
struct InfeasibleTargetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A trajectory produced a non-finite state; carries the last valid step index.
struct AbortedTrajectory : std::runtime_error {
  explicit AbortedTrajectory(std::size_t last_valid_step)
      : std::runtime_error("trajectory aborted: non-finite state after step " +
                           std::to_string(last_valid_step)),
        last_valid_step(last_valid_step) {}
  std::size_t last_valid_step;
};

}  // namespace carflow
