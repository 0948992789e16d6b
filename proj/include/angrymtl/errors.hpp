#pragma once

#include <stdexcept>
#include <string>

namespace angrymtl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct LengthMismatch    : Error { using Error::Error; };
struct ShapeMismatch     : Error { using Error::Error; };
struct CorruptFile       : Error { using Error::Error; };
struct UnknownTask       : Error { using Error::Error; };
struct EmptyText         : Error { using Error::Error; };
struct EmptyTask         : Error { using Error::Error; };
struct InvalidGold       : Error { using Error::Error; };
struct TooFewExamples    : Error { using Error::Error; };
struct MissingHead       : Error { using Error::Error; };

// Configuration file problems (bad schema, unknown keys, invariant violations).
struct ConfigError : Error { using Error::Error; };
// Problems with input data or the filesystem (missing files, bad rows).
struct DataError : Error { using Error::Error; };

// Raised when the training loss stops being finite; carries the step index.
struct NonFiniteLoss : Error {
  NonFiniteLoss(const std::string& msg, long step_index)
      : Error(msg), step(step_index) {}
  long step;
};

}  // namespace angrymtl
