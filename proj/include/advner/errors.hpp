#pragma once

#include <stdexcept>
#include <string>

namespace advner {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// config -> 2, data -> 3, numeric -> 4, everything else -> 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between tensors.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller violated an API precondition (non-scalar backward root, misaligned
// pred/gold, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint corruption or manifest/payload disagreement.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace advner
