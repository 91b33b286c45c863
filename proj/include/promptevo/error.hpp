#pragma once

#include <stdexcept>
#include <string>

namespace promptevo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or missing configuration, detected before any work starts.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data (datasets, checkpoints, config files).
struct DataError : Error {
  using Error::Error;
};

// Network-level failure after retries were exhausted.
struct TransportError : Error {
  using Error::Error;
};

// The remote endpoint answered, but not in the expected shape.
struct ProtocolError : Error {
  using Error::Error;
};

// Evaluation could not produce a trustworthy fitness record.
struct EvalError : Error {
  using Error::Error;
};

}  // namespace promptevo
