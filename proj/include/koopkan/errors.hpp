#pragma once

#include <stdexcept>
#include <string>

namespace koopkan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: bad shapes, non-finite data, out-of-range settings.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An iterative solver ran out of iterations.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Integration produced NaN/Inf.
class NumericalBlowup : public Error {
 public:
  using Error::Error;
};

/// Evaluation at a singular point of the vector field (e.g. r = 0).
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Training or rollout produced non-finite values.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Closed-loop state left the admissible region.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable file.
class FileError : public Error {
 public:
  using Error::Error;
};

}  // namespace koopkan
