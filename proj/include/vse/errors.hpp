#pragma once

#include <stdexcept>
#include <string>

namespace vse {

// Invalid configuration or flag values (bad dimensions, negative margin, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an operation's contract (non-square matrix, empty batch,
// out-of-range index, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input that is valid by type but has no meaningful answer, e.g. normalizing
// a zero vector.
struct DegenerateInputError : std::runtime_error {
  explicit DegenerateInputError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Non-finite values encountered where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed serialized data (feature files, snapshots).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vse
