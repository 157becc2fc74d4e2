// Shared error types and version info for the seqci library.
#pragma once

#include <stdexcept>
#include <string>

namespace seqci {

inline constexpr const char* kVersion = "0.1.0";

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad matrix/vector shapes or malformed numeric input.
struct ShapeError : Error {
    using Error::Error;
};

// Matrix passed to cholesky() is not positive-definite.
struct NotPositiveDefiniteError : Error {
    using Error::Error;
};

// Dataset files: parse failures, invariant violations, misaligned inputs.
struct DataError : Error {
    using Error::Error;
};

// Config files: unknown keys, out-of-range values.
struct ConfigError : Error {
    using Error::Error;
};

// Estimation failures (training divergence, fold too small, ...).
struct EstimationError : Error {
    using Error::Error;
};

// A treatment-history stratum required at evaluation was never observed
// in the training split (no smoothing by design).
struct MissingStratumError : EstimationError {
    using EstimationError::EstimationError;
};

}  // namespace seqci
