#pragma once

#include <stdexcept>
#include <string>

namespace chronovec {

// Raised for every user-facing failure: bad inputs, malformed files,
// incompatible checkpoints, evaluator failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chronovec
