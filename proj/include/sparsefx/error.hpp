#pragma once

#include <stdexcept>
#include <string>

namespace sparsefx {

/// Input data violates a dataset invariant or cannot be parsed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a trustworthy answer
/// (singular system, non-finite intermediate, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsefx
