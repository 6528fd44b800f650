#pragma once

#include <stdexcept>
#include <string>

namespace fancgan {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: parameters, shapes, configuration, dataset layout.
// The command-line front end maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Checkpoint/container format problems: bad magic, version, truncation or
// a config field that does not match the running model.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ExtractorUnavailable : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Runtime failures (exit code 2).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Mask synthesis could not place the requested particles without overlap.
class DensityError : public Error {
 public:
  DensityError(const std::string& what, int achieved)
      : Error(what), achieved_(achieved) {}
  int achieved() const { return achieved_; }

 private:
  int achieved_;
};

}  // namespace fancgan
