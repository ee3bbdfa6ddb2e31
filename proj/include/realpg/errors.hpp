#pragma once

#include <stdexcept>
#include <string>

namespace realpg {

// Each error class maps to one CLI exit code.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompatibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnumerationLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace realpg
