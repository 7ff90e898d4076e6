#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace habitforge {

/// Base of every error raised by the library. `module()` names the pipeline
/// stage that failed so front ends can report module-qualified messages.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Malformed input file. Carries the offending row (file line number) and column.
class ParseError : public Error {
 public:
  ParseError(std::string module, const std::string& message, std::size_t row = 0,
             std::string column = {})
      : Error(std::move(module), message), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class ValidationError : public Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
  using Error::Error;
};

class EstimationError : public Error {
  using Error::Error;
};

class SchemeError : public Error {
  using Error::Error;
};

class MatchingError : public Error {
  using Error::Error;
};

class SpecError : public Error {
  using Error::Error;
};

class LookupError : public Error {
  using Error::Error;
};

}  // namespace habitforge
