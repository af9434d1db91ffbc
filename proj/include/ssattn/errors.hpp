#pragma once

#include <stdexcept>

namespace ssattn {

// Incompatible extents, ranks or broadcast failures.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Values outside an op's mathematical domain (division by ~0, log of <= 0, NaN).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ssattn
