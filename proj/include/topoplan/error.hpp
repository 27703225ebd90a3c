#pragma once

#include <stdexcept>
#include <string>

namespace topoplan {

enum class ErrorKind {
  InvalidArgument,
  Parse,
  Io,
  Infeasible,
  Internal,
};

// All recoverable failures in the library are reported through this type.
// The C API maps `kind()` onto its status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace topoplan
