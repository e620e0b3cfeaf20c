#pragma once

#include <stdexcept>
#include <string>

namespace basinlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up where only finite values are allowed.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Two parameter vectors (or a checkpoint and a model) come from different model specs.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data: IDX files, checkpoints, configs.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace basinlab
