#pragma once

#include <stdexcept>
#include <string>

namespace dipstop {

// Shape mismatches, bad arguments, violated preconditions.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A file could not be read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A PNG stream could not be decoded (corrupt data, unsupported layout).
struct DecodeError : IoError {
  using IoError::IoError;
};

// Bad run configuration, from the CLI or a config file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; usually a learning-rate problem.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dipstop
