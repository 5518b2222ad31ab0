#pragma once

#include <stdexcept>
#include <string>

namespace snlevy {

/// Argument outside the domain of a mathematical operation (e.g. q < -q*).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed user input: bad configuration, inconsistent model parameters,
/// insufficient data for a fit.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to meet its own accuracy contract.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double worst)
      : std::runtime_error(what), worst_(worst) {}

  /// Worst observed discrepancy or residual, in the units of the failing check.
  double worst() const noexcept { return worst_; }

 private:
  double worst_;
};

}  // namespace snlevy
