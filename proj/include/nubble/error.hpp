#pragma once

#include <stdexcept>
#include <string>

namespace nubble {

// Base for every error the toolkit raises. The CLI maps IoError to exit
// code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed NPY container or JSON document.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed container with a dtype or rank we do not handle.
class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

/// Payload violates a type invariant (non-finite value, mask value not 0/1, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Problem size exceeds a hard bound of a quadratic-cost routine.
class BoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace nubble
