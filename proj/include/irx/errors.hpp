#pragma once

#include <stdexcept>
#include <string>

namespace irx {

// Every failure raised by the library derives from Error so the CLI can
// turn it into a one-line diagnostic.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ArgumentError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct StateError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

// Input data violates a precondition (e.g. a class with too few pixels).
struct DataError : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct BadMagicError : FormatError {
  using FormatError::FormatError;
};

struct TruncatedError : FormatError {
  using FormatError::FormatError;
};

struct VersionError : FormatError {
  using FormatError::FormatError;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace irx
