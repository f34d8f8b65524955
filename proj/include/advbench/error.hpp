#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advbench {

// Root of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf surfaced from a computation, or training divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed binary file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Bad or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Not enough samples to estimate a statistic or calibrate a threshold.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// An attack or a pipeline stage failed its own contract.
class PipelineError : public Error {
 public:
  using Error::Error;
};

}  // namespace advbench
