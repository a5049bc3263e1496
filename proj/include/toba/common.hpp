#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace toba {

// Base of every error thrown by the library. Subclasses carry the
// category named in the operation contracts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DegenerateBatch : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EncodingError : public Error {
 public:
  EncodingError(const std::string& what, std::size_t byte_offset)
      : Error(what + " at byte " + std::to_string(byte_offset)),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class NumericalDivergence : public Error {
 public:
  NumericalDivergence(const std::string& what, std::int64_t last_good_step)
      : Error(what + " (last good step " + std::to_string(last_good_step) + ")"),
        last_good_step_(last_good_step) {}
  std::int64_t last_good_step() const noexcept { return last_good_step_; }

 private:
  std::int64_t last_good_step_;
};

}  // namespace toba
