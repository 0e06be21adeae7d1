#pragma once

#include <stdexcept>
#include <string>

namespace railseg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or truncated on-disk data.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A value violates a domain invariant (bad class id, misaligned arrays, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure (missing file, unwritable path).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace railseg
