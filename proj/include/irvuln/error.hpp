#pragma once

#include <stdexcept>
#include <string>

namespace irvuln {

// Bad input data: malformed files, inconsistent labels, digest mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses and failed gradient verification.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace irvuln
