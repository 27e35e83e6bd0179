#pragma once

#include <stdexcept>
#include <string>

namespace sfuda {

/// Base of every error raised by the toolkit. The CLI maps each subclass to
/// a distinct process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Malformed or inconsistent configuration (unknown keys, bad values).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A required checkpoint, manifest or run directory does not exist.
class MissingArtifact : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A precondition or invariant of an operation was violated.
class ContractViolation : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// File could not be read, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace sfuda
