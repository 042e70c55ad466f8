#pragma once

#include <stdexcept>
#include <string>

namespace ppshare {

/// Bad input: malformed files, out-of-range parameters, violated preconditions.
/// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Lookup of a location that lies outside the study window.
class DomainError : public ValidationError {
 public:
  explicit DomainError(const std::string& what) : ValidationError(what) {}
};

/// Factorization failures, non-finite likelihoods, diverging fits. Exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ppshare
