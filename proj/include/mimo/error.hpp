#pragma once

#include <stdexcept>
#include <string>

namespace mimo {

// Base class for every error the library raises. The CLI maps the
// subclasses onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument, extent mismatch, or violated precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file, bad magic, unreadable path.
class FormatError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration or flag combination.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mimo
