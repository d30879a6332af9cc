#pragma once

#include <stdexcept>

namespace rebarnet {

// Base for everything this library throws. Each subclass is one error
// family; the CLI maps families to exit codes (see docs/formats.md).
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or layer shape contract violated.
class ShapeError : public Error {
  using Error::Error;
};

// A parameter value is out of its documented range.
class ConfigError : public Error {
  using Error::Error;
};

// Filesystem operation failed.
class IoError : public Error {
  using Error::Error;
};

// File contents malformed, wrong version, or inconsistent with metadata.
class FormatError : public Error {
  using Error::Error;
};

// Dataset-level problem: empty class, bad label, unsplittable corpus.
class DataError : public Error {
  using Error::Error;
};

// Training loss became non-finite.
class DivergenceError : public Error {
  using Error::Error;
};

}  // namespace rebarnet
