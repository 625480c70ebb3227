#pragma once

#include <stdexcept>
#include <string>

namespace tcdetect {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents or layer dimensions do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// An argument value is outside its legal range (probabilities, thresholds,
// labels, sigmas, degenerate norms).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// A name or option was not recognized, or a config document is invalid.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Input data violates a contract (empty set, out-of-range values,
// mismatched lengths, unsplittable or single-class datasets).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// A file on disk does not match its declared format (magic, truncation,
// payload mismatch, checksum, unknown version, missing entries).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// An operation was invoked in the wrong order (backward before forward).
class StateError : public Error {
 public:
  explicit StateError(const std::string& msg) : Error(msg) {}
};

// Training produced a non-finite loss; message carries the epoch index.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

// A registry write collided with an existing (name, version) entry.
class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& msg) : Error(msg) {}
};

}  // namespace tcdetect
