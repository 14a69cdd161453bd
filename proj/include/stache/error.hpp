#pragma once

#include <stdexcept>
#include <string>

namespace stache {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state does not fit its factorization (wrong arity or a value outside a domain).
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

class InvalidFactorizationError : public Error {
 public:
  using Error::Error;
};

/// Enumeration would exceed the configured state cap.
class SpaceTooLargeError : public Error {
 public:
  using Error::Error;
};

/// A policy could not answer for a state. `state()` holds a printable form of it.
class QueryError : public Error {
 public:
  QueryError(const std::string& message, std::string state)
      : Error(message + " (state " + state + ")"), state_(std::move(state)) {}

  const std::string& state() const noexcept { return state_; }

 private:
  std::string state_;
};

/// An external policy answered differently for a state it already answered.
class DeterminismViolationError : public QueryError {
 public:
  using QueryError::QueryError;
};

class NotInRegionError : public Error {
 public:
  using Error::Error;
};

class IncompletePolicyError : public Error {
 public:
  using Error::Error;
};

class FactorizationMismatchError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A JSON document does not follow the schema it claims (or is expected) to follow.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace stache
