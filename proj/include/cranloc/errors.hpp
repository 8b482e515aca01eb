#pragma once

#include <stdexcept>
#include <string>

namespace cranloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scenario document (syntax or missing/mistyped keys).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A well-formed input violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Fisher information is singular or indefinite; the target position is not identifiable.
class UnlocalizableError : public Error {
 public:
  UnlocalizableError() : Error("unlocalizable configuration") {}
  explicit UnlocalizableError(const std::string& what)
      : Error("unlocalizable configuration: " + what) {}
};

/// Q-matrix relaxation is indefinite for some circle, so its inverse trace bounds nothing.
class RelaxationInapplicableError : public Error {
 public:
  explicit RelaxationInapplicableError(const std::string& what)
      : Error("relaxation bound inapplicable: " + what) {}
};

/// Numerical failure inside the optimizer.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace cranloc
