#pragma once

#include <stdexcept>
#include <string>

namespace mrinet {

// Invalid shapes, mismatched operands, out-of-range axes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced by an operation, division by zero.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated files (PGM, manifest, weights, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset content that violates a contract (wrong labels for an arm, empty split).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mrinet
