#pragma once

#include <stdexcept>
#include <string>

namespace sparsegp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, ranges or arguments that violate an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Every jitter level of a factorization ladder failed.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(const std::string& what, double last_jitter)
      : Error(what), last_jitter_(last_jitter) {}

  double last_jitter() const { return last_jitter_; }

 private:
  double last_jitter_;
};

/// A non-finite objective or gradient. Carries the offending parameter block.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::string parameter = {})
      : Error(what), parameter_(std::move(parameter)) {}

  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// A request that the configured resource caps do not allow.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Failure while reading or parsing external data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsegp
