#pragma once

#include <stdexcept>

namespace stofnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad argument values or non-finite input data.
struct InvalidArgument : Error {
  using Error::Error;
};

// Length/channel mismatches between data and a model, mask or buffer.
struct ShapeError : Error {
  using Error::Error;
};

// Infeasible or inconsistent configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed, truncated or version-incompatible files.
struct FormatError : Error {
  using Error::Error;
};

// The requested quantity is mathematically undefined for this input.
struct UndefinedValue : Error {
  using Error::Error;
};

}  // namespace stofnet
