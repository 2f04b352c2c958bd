#ifndef OCT3D_ERROR_HPP
#define OCT3D_ERROR_HPP

#include <stdexcept>
#include <string>

namespace oct3d {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, extents, or mismatched operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (out-of-range parameters, bad configuration).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// File-system or stream failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input in a text or binary file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace oct3d

#endif  // OCT3D_ERROR_HPP
