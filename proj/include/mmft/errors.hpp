#pragma once

#include <stdexcept>

namespace mmft {

/// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A forward op produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Class label outside [0, C).
class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sequence longer than a model or assembler allows.
class LengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed dataset or checkpoint file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmft
