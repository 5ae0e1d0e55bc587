#pragma once

#include <stdexcept>
#include <string>

namespace modis {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad field value, unknown field, impossible request).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (empty stratum, missing pairing, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A loss or parameter became non-finite, or a numerical routine degenerated.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace modis
