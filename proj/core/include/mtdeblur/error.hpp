#pragma once

#include <stdexcept>
#include <string>

namespace mtdeblur {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached a place that requires finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Backward pass met a recorded primitive without a gradient rule.
class UnsupportedOpError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (model, scene, training or CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to a data operation (window sizes, patch sizes, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed file: bad magic, version mismatch, truncated payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checksum mismatch or missing file referenced by a manifest.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtdeblur
