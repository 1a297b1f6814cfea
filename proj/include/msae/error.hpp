#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input. `line()` is the 1-based line number, or 0 when not tied to a line.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed fine but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A stratum with a single sampled cluster under the `error` lonely-PSU policy.
class LonelyPsuError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite densities, singular precisions, failed factorizations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace msae
