#pragma once

#include <stdexcept>
#include <string>

namespace crownstitch {

// Bad input, bad configuration, or a violated precondition. The CLI maps
// these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failures while doing the work: I/O, corrupt files, backend crashes.
// The CLI maps these to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an operation is asked to produce geometry from nothing,
// e.g. vectorizing an empty mask.
class NoGeometryError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace crownstitch
