#pragma once

#include <stdexcept>
#include <string>

namespace geoperc {

/// Bad argument to a pure function (non-finite input, out-of-range pixel, shape mismatch).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-typed but geometrically degenerate (e.g. Sim(3) fit on coincident points).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data (scene packs, manifests, JSON-lines files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace geoperc
