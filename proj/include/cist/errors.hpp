#pragma once

#include <stdexcept>
#include <string>

namespace cist {

// Invalid numeric argument: non-finite logits, tau <= 0, bad fraction, ...
struct InvalidArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Mismatched dimensions between batch inputs.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Missing or inconsistent configuration fields; message names the field.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File parse/IO failure; message carries path and line where known.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss during training; message names the epoch.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cist
