#pragma once

#include <stdexcept>
#include <string>

namespace sti {

// Failure classes map onto distinct CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing, or mismatched input data (files, grids, shapes).
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or breakdown inside a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sti
