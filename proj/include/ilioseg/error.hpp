#pragma once

#include <stdexcept>
#include <string>

namespace ilio {

// Invalid argument to a public operation (bad label, shape mismatch, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unknown magic or malformed header.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header and payload disagree, or the file is truncated.
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Phantom geometry cannot realise the requested shape inside the grid.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Architecture spec violates a structural constraint.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values in gradients or losses.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistics undefined for the given data (zero variance etc).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace ilio
