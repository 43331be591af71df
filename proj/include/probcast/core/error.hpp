#pragma once

#include <stdexcept>
#include <string>

namespace probcast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, empty range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded (bad magic, truncation, non-finite payload).
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where finite numbers are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked on a model of the wrong kind.
class ModeError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace probcast
