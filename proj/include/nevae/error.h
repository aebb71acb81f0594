#pragma once

#include <stdexcept>
#include <string>

namespace nevae {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an op's shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A forward value or gradient became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (corpus lines, checkpoints, configs).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A masked softmax has no admissible outcome left.
class NoCandidateError : public Error {
 public:
  using Error::Error;
};

}  // namespace nevae
