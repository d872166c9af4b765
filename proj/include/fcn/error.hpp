#pragma once

#include <stdexcept>
#include <string>

namespace fcn {

// Base for everything thrown on purpose. The CLI maps these to exit codes:
// ParseError/DataError -> 2, NumericError -> 3, bad usage -> 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files: tensors, checkpoints, PGMs, net descriptions, configs.
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Structurally valid input that violates a contract (shape mismatch,
// label out of range, missing file, bad graph).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf guards and divergence aborts.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace fcn
