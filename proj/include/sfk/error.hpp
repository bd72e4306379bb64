#pragma once

#include <stdexcept>
#include <string>

namespace sfk {

// Failure classes map onto CLI exit codes (1 config, 2 data, 3 runtime).
enum class ErrorKind { kConfig, kData, kStructural, kRuntime, kNotFound, kInvalidArgument };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error(ErrorKind::kData, m) {}
};

/// Tensor geometry does not match what an operation requires.
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& m) : Error(ErrorKind::kStructural, m) {}
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string& m) : Error(ErrorKind::kRuntime, m) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& m) : Error(ErrorKind::kNotFound, m) {}
};

/// Malformed user input; `field` names the offending field when there is one.
class InvalidArgument : public Error {
 public:
  InvalidArgument(const std::string& m, std::string field = {})
      : Error(ErrorKind::kInvalidArgument, m), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace sfk
