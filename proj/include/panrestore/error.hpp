#pragma once

#include <stdexcept>
#include <string>

namespace panrestore {

// Raised for invalid shapes, channel mismatches and bad configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised for failures that happen while running (NaN loss, I/O problems).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace panrestore
