#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sqd {

/// Malformed textual input (bitstrings, sample files, CSV cells).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure that can be attributed to a specific input line.
class ParseError : public FormatError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Arguments outside an operation's mathematical domain.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iterative solver stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

/// A request would exceed a configured memory or size cap.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad run configuration; `field` names the offending setting.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace sqd
