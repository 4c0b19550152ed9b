#pragma once

#include <stdexcept>
#include <string>

namespace topomatch {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range input data (files, options, arguments).
class InputError : public Error {
 public:
  using Error::Error;

  InputError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what) {}
};

/// Artifacts that do not belong together: fingerprint or dimension mismatch.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values in parameters, activations or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace topomatch
