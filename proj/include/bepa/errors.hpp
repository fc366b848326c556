#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bepa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something outside a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Bad config file, contradictory settings, or a mode the data cannot support.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, degenerate inputs to a numeric routine, and the like.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Filesystem trouble: missing files, short reads, unwritable paths.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bepa
