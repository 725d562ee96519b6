#pragma once

#include <stdexcept>
#include <string>

namespace welwl {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape or width mismatch between operands. The message names both shapes.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration value (bad width, nonpositive count, unknown tag).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// File or format problem while reading or writing external data.
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace welwl
