#pragma once

#include <stdexcept>
#include <string>

namespace esaw {

// Error taxonomy maps onto the CLI exit codes: ConfigError -> 2,
// ProtocolError -> 4, everything else -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class PretrainError : public Error {
 public:
  PretrainError(const std::string& msg, double mean_prior_accuracy)
      : Error(msg), mean_prior_accuracy(mean_prior_accuracy) {}
  double mean_prior_accuracy = 0.0;
};

}  // namespace esaw
