#pragma once

#include <stdexcept>
#include <string>

namespace pdet {

// Base for every error the library raises. The CLI maps each family onto a
// process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, malformed or inconsistent data files (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in a solver, loss, gradient or prediction (exit code 4).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind { kBadMagic, kVersionMismatch, kTruncated, kNonFinite, kCorruptHeader };

class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : DataError(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace pdet
