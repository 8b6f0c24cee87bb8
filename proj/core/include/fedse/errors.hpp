#pragma once

#include <stdexcept>
#include <string>

namespace fedse {

/// Raised when a caller breaks a documented precondition (shape mismatch,
/// empty batch, illegal action, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by numerical routines that would otherwise emit NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedse
