#pragma once

#include <stdexcept>
#include <string>

namespace metadetect {

// Contract violation on an input value (bad parameter, malformed record, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Query outside the domain an object was built for (e.g. spline extrapolation).
class OutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Filesystem / stream failure while reading or writing an artifact.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metadetect
