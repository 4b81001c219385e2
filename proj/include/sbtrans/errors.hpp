#pragma once

#include <stdexcept>
#include <string>

namespace sbtrans {

/// Base of every error raised by the library. The CLI maps each subclass to a
/// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad data on the way in: unreadable files, non-numeric cells, too few rows.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; names the offending row and column when known.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

/// Too few observations (or distinct responses) for the requested operation.
class InsufficientDataError : public InputError {
 public:
  using InputError::InputError;
};

/// Invalid option or argument value (tau outside (0,1), negative scale, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a kernel.
class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Numerical failure: non-PSD covariance, failed factorization, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class LinearAlgebraError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Every importance weight is zero.
class DegenerateWeightsError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace sbtrans
