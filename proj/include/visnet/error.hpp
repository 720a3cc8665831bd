// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace visnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A batch too small or too uniform for the requested statistic.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or model layout.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape (reuse, foreign node, non-scalar root).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// A function evaluated to a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Input data that parses but violates a documented invariant.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace visnet
