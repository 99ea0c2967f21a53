#include "densecap/errors.hpp"

namespace densecap {

void throw_error(ErrorKind kind, const std::string& message) {
  switch (kind) {
    case ErrorKind::validation: throw ValidationError(message);
    case ErrorKind::io: throw IoError(message);
    case ErrorKind::config: throw ConfigError(message);
    case ErrorKind::argument: throw ArgumentError(message);
    case ErrorKind::precondition: throw PreconditionError(message);
  }
  throw Error(kind, message);
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::argument:
    case ErrorKind::precondition:
      return 1;
    case ErrorKind::io:
      return 2;
    case ErrorKind::config:
      return 3;
  }
  return 1;
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::argument: return "argument error";
    case ErrorKind::precondition: return "precondition error";
  }
  return "error";
}

}  // namespace densecap
