#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lkge {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// The growth builder ran out of admissible facts before reaching a quota.
class BuilderError : public Error {
 public:
  using Error::Error;
};

// A quantity with an empty support (zero counts, empty averages).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

// Internal contract violation (a caller broke a documented precondition).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace lkge
