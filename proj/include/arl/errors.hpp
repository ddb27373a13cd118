#ifndef ARL_ERRORS_HPP
#define ARL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace arl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid sizes, counts or hyperparameters.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Operands whose shapes (channels, degree, vector length) disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Time interval or grid point outside the supported span.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Observations arriving out of time order.
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Overflow, divergence or a non-finite intermediate.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples for a statistic.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Linear system singular even after regularisation.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace arl

#endif  // ARL_ERRORS_HPP
