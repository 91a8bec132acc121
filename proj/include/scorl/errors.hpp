#pragma once
#include <stdexcept>
#include <string>

namespace scorl {

// ConfigError: bad user input (config files, CLI flags, malformed checkpoints).
// NumericError: runtime numerical failure (NaN states, invalid step sizes).
// The CLI maps these to exit codes 1 and 2 respectively.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scorl
