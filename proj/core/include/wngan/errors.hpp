#pragma once

#include <stdexcept>
#include <string>

namespace wngan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared, or a division by zero was requested.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, builder argument or CLI value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File or stream failure, or malformed file contents.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace wngan
