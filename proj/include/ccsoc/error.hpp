#pragma once

#include <stdexcept>
#include <string>

namespace ccsoc {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (case files, configs, JSON dumps).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input that parses but violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside a solver (singular matrices, backend breakdown).
class SolverError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure ran out of its iteration budget.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Tightened bounds crossed, so the chance-constrained problem is empty.
class InfeasibleTighteningError : public Error {
 public:
  InfeasibleTighteningError(const std::string& quantity, double lower, double upper)
      : Error("tightened bounds crossed for " + quantity + " (lower " + std::to_string(lower) +
              " > upper " + std::to_string(upper) + ")"),
        quantity_(quantity) {}

  const std::string& quantity() const noexcept { return quantity_; }

 private:
  std::string quantity_;
};

}  // namespace ccsoc
