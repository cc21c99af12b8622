#pragma once

#include <stdexcept>
#include <string>

namespace leprompter {

/// Violated precondition (bad dimensions, out-of-bounds prompt, empty cluster).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Malformed input file (unsupported PNG property, bad text grid, bad checkpoint).
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes incompatible for an operation.
class ShapeError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// NaN or Inf produced by a numeric operation.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace leprompter
