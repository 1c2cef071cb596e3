#pragma once

#include <stdexcept>
#include <string>

namespace cold {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value is outside an operation's domain (log of non-positive, bad id, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched files: checkpoints, corpora, instance files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses, gradients or energies.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cold
