#pragma once

#include <stdexcept>
#include <string>

namespace mivolo {

// Shape or window mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed user input: manifests, images, boxes, votes.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration, including checkpoint/config mismatch.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An API used outside its contract (double backward, skip path with both inputs).
class MisuseError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf detected in values or gradients.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mivolo
