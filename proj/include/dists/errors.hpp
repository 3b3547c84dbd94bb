#pragma once

#include <stdexcept>
#include <string>

namespace dists {

/// Tensor or statistic operands whose shapes do not agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed binary container (bad magic, version, truncated header).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A weight container parsed, but its records do not fit the network.
struct IncompatibleWeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Gradient descent produced a non-finite iterate.
struct OptimizationError : std::runtime_error {
  OptimizationError(const std::string& what, int iter)
      : std::runtime_error(what + " (iteration " + std::to_string(iter) + ")"), iteration(iter) {}
  int iteration;
};

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad manifest rows, unreadable images, exhausted training sources.
struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dists
