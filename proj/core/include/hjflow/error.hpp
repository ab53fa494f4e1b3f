#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hjflow {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `column` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t column)
      : Error(what + " at column " + std::to_string(column)), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

/// Differentiation of an unsupported construct (user call, variable exponent).
class DerivativeError : public Error {
 public:
  using Error::Error;
};

class SubstitutionError : public Error {
 public:
  using Error::Error;
};

/// Input document does not match its schema or violates a naming rule.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold (off-surface
/// start, mismatched path endpoints, degenerate gauge).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Trajectory entered a declared singular region.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Grid too coarse, box too small, or spectral tail too heavy.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace hjflow
