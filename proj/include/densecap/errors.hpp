#pragma once

#include <stdexcept>
#include <string>

namespace densecap {

enum class ErrorKind {
  validation,    // a record violates a type invariant
  io,            // filesystem or transport failure
  config,        // configuration is missing, malformed, or inconsistent
  argument,      // an operation argument is out of its domain
  precondition,  // caller broke an ordering/shape precondition
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& m) : Error(ErrorKind::argument, m) {}
};
struct PreconditionError : Error {
  explicit PreconditionError(const std::string& m) : Error(ErrorKind::precondition, m) {}
};

// Throws the Error subclass matching `kind`.
[[noreturn]] void throw_error(ErrorKind kind, const std::string& message);

// CLI exit codes: 0 success, 1 validation, 2 I/O, 3 config.
int exit_code(ErrorKind kind) noexcept;

const char* to_string(ErrorKind kind) noexcept;

}  // namespace densecap
