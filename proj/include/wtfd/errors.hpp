#pragma once

#include <stdexcept>
#include <string>

namespace wtfd {

// Error taxonomy used across the toolkit. The CLI maps these to exit codes;
// library code throws and never prints.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (unknown class id, invalid hyperparameter).
struct ConfigError : Error {
  using Error::Error;
};

// Tensor/array shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

// Malformed input file; message carries location (line / byte offset).
struct ParseError : Error {
  using Error::Error;
};

// A documented API contract was violated by the caller or by internal state.
struct ContractError : Error {
  using Error::Error;
};

// Filesystem failure (missing file, short read, write error).
struct IoError : Error {
  using Error::Error;
};

}  // namespace wtfd
