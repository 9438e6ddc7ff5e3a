#pragma once

#include <stdexcept>

namespace kanslu {

// Shapes that do not fit an operation's contract.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Scalar hyperparameters outside their valid range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Inputs too short for the requested processing.
struct LengthError : std::length_error {
  using std::length_error::length_error;
};

// Well-formed input carrying a value outside the accepted vocabulary.
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse: calling things in the wrong order or on the wrong object.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct DegenerateBatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedFormatError : FormatError {
  using FormatError::FormatError;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kanslu
