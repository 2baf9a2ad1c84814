#pragma once

#include <stdexcept>
#include <string>

namespace prunelab {

enum class ErrorKind {
  Usage,      // bad arguments / malformed config
  Dimension,  // shape mismatch between operands
  Numerical,  // singular / ill-conditioned / diverged
  Io,         // filesystem failures
};

/// Single exception type for the whole library; `kind()` maps onto the
/// CLI exit codes (1 usage, 2 numerical, 3 I/O).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::Usage:
        return 1;
      case ErrorKind::Dimension:
      case ErrorKind::Numerical:
        return 2;
      case ErrorKind::Io:
        return 3;
    }
    return 2;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& m) {
  throw Error(ErrorKind::Usage, m);
}
[[noreturn]] inline void fail_dimension(const std::string& m) {
  throw Error(ErrorKind::Dimension, m);
}
[[noreturn]] inline void fail_numerical(const std::string& m) {
  throw Error(ErrorKind::Numerical, m);
}
[[noreturn]] inline void fail_io(const std::string& m) {
  throw Error(ErrorKind::Io, m);
}

}  // namespace prunelab
