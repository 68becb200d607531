#pragma once

#include <stdexcept>
#include <string>

namespace cdist {

// Every error raised by the library derives from Error; the C API maps the
// concrete type onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed architecture description (bad width, stage out of range, ...).
class SpecError : public Error {
 public:
  using Error::Error;
};

// Caller passed an argument outside the accepted domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input is numerically degenerate for the requested statistic.
class DegenerateError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Operation called in a state that violates its precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Memory budget cannot hold even the smallest admissible input.
class InfeasibleError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// Missing or unusable data (empty corpus, unreadable file, bad checkpoint).
class DataError : public Error {
 public:
  using Error::Error;
};

// Run configuration could not be parsed or is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or non-finite parameters.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdist
