#pragma once

#include <stdexcept>
#include <string>

namespace rdc {

/// Raised for bad input: malformed files, invalid configuration, violated
/// preconditions. The CLI maps it to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for failures while running: transport errors, I/O errors, bad
/// responses from a backend. The CLI maps it to exit status 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rdc
