#pragma once

#include <stdexcept>
#include <string>

namespace emgmoe {

enum class ErrorKind {
  InvalidInput,
  Degenerate,
  OutOfRange,
  Format,
  Io,
  Shape,
  InvalidState,
  Diverged,
  InsufficientData,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Shape: return "shape mismatch";
    case ErrorKind::InvalidState: return "invalid state";
    case ErrorKind::Diverged: return "diverged training";
    case ErrorKind::InsufficientData: return "insufficient partition data";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code for the CLI: 2 invalid input, 3 diverged training,
// 4 insufficient partition data, 1 anything else.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Diverged: return 3;
    case ErrorKind::InsufficientData: return 4;
    case ErrorKind::Io:
    case ErrorKind::InvalidState: return 1;
    default: return 2;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace emgmoe
