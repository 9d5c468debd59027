#pragma once

#include <stdexcept>
#include <string>

namespace dvk {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments: shape mismatches, domain violations, degenerate inputs.
class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Malformed or unreadable files (tensor files, checkpoints, manifests).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf escaping a computation. Never silent.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace dvk
