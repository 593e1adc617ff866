#pragma once

#include <stdexcept>
#include <string>

namespace osdec {

// Malformed or inconsistent input data (CSV rows, config files).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an API precondition (buggy scheduler, unordered batch).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Tensor dimensions do not conform for an operator.
struct ShapeError : std::logic_error {
  explicit ShapeError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace osdec
