#pragma once

#include <stdexcept>
#include <string>

namespace nghf {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parameter layouts that overlap, leave gaps, or do not match.
struct LayoutError : Error {
  using Error::Error;
};

/// Matrix/vector dimensions inconsistent with a network or lattice.
struct ShapeError : Error {
  using Error::Error;
};

/// Non-finite values, indefinite curvature, and similar numerical aborts.
struct NumericalError : Error {
  using Error::Error;
};

/// Lattice construction or parsing failures.
struct LatticeError : Error {
  using Error::Error;
};

/// Invalid configuration (unknown keys, malformed values, bad ranges).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace nghf
