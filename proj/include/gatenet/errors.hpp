#pragma once

#include <stdexcept>
#include <string>

namespace gatenet {

/// Operand extents are incompatible with the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A byte stream or file does not follow the expected container layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored digest does not match recomputed content.
class DigestError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// An artifact was produced from different upstream inputs than the caller expects.
class ProvenanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file or upstream artifact does not exist.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An experiment configuration is malformed or inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced NaN loss or failed the early-accuracy guard.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A frozen parameter was found trainable where the freeze contract requires otherwise.
class FreezeViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gatenet
