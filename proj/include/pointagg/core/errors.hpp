#pragma once

#include <stdexcept>
#include <string>

namespace pointagg {

// Bad user input: malformed config, mismatched shapes, unusable arguments.
// The CLI maps this category to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

class DimensionError : public ValidationError {
 public:
  explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

class DegenerateInputError : public ValidationError {
 public:
  explicit DegenerateInputError(const std::string& msg) : ValidationError(msg) {}
};

// Non-finite values or a numeric routine that failed to do its job.
// The CLI maps this category to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pointagg
