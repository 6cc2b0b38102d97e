#pragma once

#include <stdexcept>
#include <string>

namespace encdecad {

// Error with a machine-readable category, surfaced by the CLI as
// "error [<category>]: <message>" and mapped to a nonzero exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& msg) : Error("artifact", msg) {}
};

}  // namespace encdecad
