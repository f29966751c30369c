#pragma once

#include <stdexcept>
#include <string>

namespace cmpg {

// Bad shapes, bad layouts, malformed config files. CLI maps this to exit 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (empty tape, empty log list, ...). CLI maps this to exit 2.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Value outside its mathematical domain (e.g. feature outside [lb, hb]).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cmpg
