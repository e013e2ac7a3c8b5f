#pragma once

#include <stdexcept>
#include <string>

namespace dvs {

// Base for every error raised by the library. `kind()` is a stable,
// machine-parsable class name used by the CLI on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& what) : Error("value_error", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

}  // namespace dvs
