// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace televit {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar backward root, non-binary target, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by an op or found in gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad model dims, non-divisible grids, unknown variant.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class TokenizationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Malformed or inconsistent data: missing inputs, bad manifest, absent patches.
class DataError : public Error {
 public:
  using Error::Error;
};

class DegenerateVariableError : public DataError {
 public:
  using DataError::DataError;
};

class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

/// Training loss became non-finite. The last good checkpoint stays on disk.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace televit
