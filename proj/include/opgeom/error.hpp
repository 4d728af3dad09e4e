#pragma once

#include <stdexcept>
#include <string>

namespace opgeom {

/// Base class for every error raised by the library. `kind()` is a short
/// stable token used by the command-line tool for machine-parsable output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("invalid_argument", message) {}
};

/// File could not be opened, read, parsed, or written.
class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

/// A numerical routine failed or produced an unusable result.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message) : Error("numerical", message) {}
};

}  // namespace opgeom
