#pragma once

#include <stdexcept>
#include <string>

namespace mixcox {

// Input that violates a documented domain constraint (bad probability,
// malformed row, non-positive time, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The data cannot support the requested fit: empty risk sets, no events.
class DegenerateDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Monotone likelihood: a coefficient diverges to +/- infinity.
class SeparationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A quantity was requested where the model leaves it undefined.
class InvalidStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Finite-difference information matrix is not positive definite.
class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mixcox
