#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nlslide {

/// Base of every error raised by the library. `category()` is the short,
/// machine-parsable class printed by the CLI ("parse", "domain", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& message)
      : Error("parse", "at offset " + std::to_string(offset) + ": " + message),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnboundVariable : public Error {
 public:
  explicit UnboundVariable(const std::string& name)
      : Error("unbound", "unbound variable '" + name + "'"), name_(name) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error("domain", message) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& message) : Error("model", message) {}
};

class NotOnManifold : public Error {
 public:
  explicit NotOnManifold(const std::string& message) : Error("manifold", message) {}
};

class CoordinateFormError : public Error {
 public:
  explicit CoordinateFormError(const std::string& message) : Error("coordinates", message) {}
};

class IntegrationError : public Error {
 public:
  IntegrationError(double t, const std::string& message)
      : Error("integration", message + " (t = " + std::to_string(t) + ")"), time_(t) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

class AmbiguousBranch : public Error {
 public:
  explicit AmbiguousBranch(const std::string& message) : Error("branch", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

}  // namespace nlslide
