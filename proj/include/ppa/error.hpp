#pragma once

#include <stdexcept>
#include <string>

namespace ppa {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: shape mismatches, invalid specs, corrupt containers.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Container bytes that do not decode.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Training produced a non-finite loss or weight.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A numerical certificate did not hold.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppa
