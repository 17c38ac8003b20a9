#pragma once

#include <stdexcept>
#include <string>

namespace ssgrl {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/parameter shapes.
struct DimError : Error {
  using Error::Error;
};

// Malformed input file (message carries line number or byte offset).
struct ParseError : Error {
  using Error::Error;
};

// Inconsistent or invalid configuration, rejected before any compute.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Filesystem failures (open/read/write).
struct IoError : Error {
  using Error::Error;
};

// Named entity not found (category word, sample id).
struct LookupError : Error {
  using Error::Error;
};

}  // namespace ssgrl
