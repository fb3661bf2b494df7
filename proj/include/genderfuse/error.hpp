#pragma once

#include <stdexcept>
#include <string>

namespace genderfuse {

// Bad invocation: malformed flags, unknown config keys, invalid knob values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, inconsistent corpora, numerical failure.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace genderfuse
