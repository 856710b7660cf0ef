#pragma once

#include <stdexcept>
#include <string>

namespace heightbev {

// Malformed or inconsistent input: bad files, shape/grid mismatches,
// invalid construction parameters.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: behind-camera projection, non-finite loss or
// gradient, diverging optimization.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace heightbev
