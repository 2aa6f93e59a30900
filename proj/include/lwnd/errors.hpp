#pragma once

#include <stdexcept>
#include <string>

namespace lwnd {

/// Malformed arguments, shape mismatches and invalid configurations.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable/unwritable files and corrupt on-disk artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A lowered program disagrees with the model it was lowered from.
class EquivalenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lwnd
