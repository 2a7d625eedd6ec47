#pragma once

#include <stdexcept>
#include <string>

namespace kdfe {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input did not satisfy a documented contract (bad file, bad code, bad
/// config). The CLI maps these to exit code 1.
class ValidationError : public Error {
  public:
    using Error::Error;
};

class SchemaError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class RowError : public ValidationError {
  public:
    RowError(std::size_t line, const std::string &message)
        : ValidationError("line " + std::to_string(line) + ": " + message), line_{line} {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class ValueError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class SyntaxError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class UnknownOpcodeError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class UnknownConceptError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

/// A caller broke a precondition that the type system cannot express
/// (unsorted stream, mismatched columns).
class ContractViolation : public Error {
  public:
    using Error::Error;
};

} // namespace kdfe
