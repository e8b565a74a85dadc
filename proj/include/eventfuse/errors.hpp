#pragma once

#include <stdexcept>
#include <string>

namespace eventfuse {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller passed a value outside an operation's documented domain.
struct ArgumentError : Error {
  using Error::Error;
};

/// Matrix/vector dimensions do not line up; the message names the shapes.
struct ShapeError : Error {
  using Error::Error;
};

/// A record or configuration violates a declared invariant.
struct ValidationError : Error {
  using Error::Error;
};

/// A file could not be read as the documented format.
struct ParseError : Error {
  using Error::Error;
};

/// A referenced entity (sample id, checkpoint key) does not exist.
struct NotFoundError : Error {
  using Error::Error;
};

/// Filesystem-level failure (missing file, unwritable path).
struct IoError : Error {
  using Error::Error;
};

/// A computation produced NaN/Inf or was asked to consume one.
struct NumericError : Error {
  using Error::Error;
};

/// Internal API contract broken (mismatched trace, misaligned state).
struct ContractError : Error {
  using Error::Error;
};

/// Training diverged; message names the epoch and batch.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace eventfuse
