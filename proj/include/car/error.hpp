#pragma once

#include <stdexcept>
#include <string>

namespace car {

// Raised when an argument, config field or input file violates a documented
// precondition. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// I/O and other environmental failures. The CLI maps this to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace car
