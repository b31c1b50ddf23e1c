#pragma once

#include <stdexcept>
#include <string>

namespace nphmm {

// Invalid input, configuration or file contents. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parse failure while reading a text file; carries the 1-based line number.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ConfigError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Numerical breakdown: singular systems, impossible data, failed optimization.
// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The augmented stationary system has no unique solution (reducible chain).
class SingularChainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace nphmm
