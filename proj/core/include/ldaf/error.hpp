#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ldaf {

/// Coarse failure category. The CLI prints it as the machine-parsable
/// prefix of its single-line error message.
enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  Numerical,
  Convergence,
  Io,
  Format,
  Config,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) {
    throw Error(kind, message);
  }
}

}  // namespace ldaf
