#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvgmn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of operands do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its supported set.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data violates an operation precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf was produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A serialized file is malformed. `offset()` is the byte position where
/// decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace mvgmn
