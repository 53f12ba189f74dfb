// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace oliera {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape disagreement or an invalid dimension list.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A tensor entry fell at or below the group-membership epsilon.
class MembershipError : public Error {
 public:
  MembershipError(const std::string& what, std::size_t row, std::size_t col)
      : Error(what), row_(row), col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

/// Operation called in the wrong lifecycle state (e.g. begin_task twice).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: unknown method, stream kind, bad permutation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A public operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite or exceeded the divergence threshold.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact could not be read: truncated, malformed, or from a
/// different format version.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace oliera
