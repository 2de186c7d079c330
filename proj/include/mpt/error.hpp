#pragma once

#include <stdexcept>
#include <string>

namespace mpt {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible array extents passed to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, module or run configuration (e.g. D not divisible by heads).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A sequence longer than a fixed-capacity table allows.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: spec/config text, label sets, partitions.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Binary container decoding failure. The kind distinguishes the failure
/// modes callers are expected to handle differently.
class FormatError : public InputError {
 public:
  enum class Kind { bad_magic, version_mismatch, truncated, checksum_mismatch, malformed, io };

  FormatError(Kind kind, const std::string& what) : InputError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mpt
