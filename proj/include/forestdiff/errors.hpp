#pragma once

#include <stdexcept>
#include <string>

namespace forestdiff {

// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a schema, configuration or precondition contract.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Persisted model is corrupted or was written by an incompatible version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace forestdiff
