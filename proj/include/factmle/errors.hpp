#pragma once

#include <stdexcept>
#include <string>

namespace factmle {

/// Malformed input file (non-numeric cell, ragged rows, ...).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input violates a documented precondition (non-square covariance,
/// nonpositive diagonal, infeasible parameters, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numerical kernel failed (eigensolver did not converge, update
/// produced an invalid quantity).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A recorded solver trace violates one of the descent guarantees.
class CertificationFailure : public std::runtime_error {
 public:
  CertificationFailure(int iteration, const std::string& msg)
      : std::runtime_error(msg), iteration_(iteration) {}

  /// 1-based index of the first violating step.
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace factmle
