#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cfdens {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or grids that do not line up.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A value outside the domain of an operation (e.g. log of a zero cell).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input rows: missing columns, unparseable values, outcomes outside the support.
class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// IRLS did not reach the tolerance; carries the deviance of every iteration.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), deviance_trace(std::move(trace)) {}
  std::vector<double> deviance_trace;
};

/// Coefficients diverge because some cell pattern is perfectly separated.
class SeparationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfdens
