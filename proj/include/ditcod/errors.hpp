#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ditcod {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents, ranks or channel counts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Arguments that violate a documented precondition (thresholds, non-binary masks, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. Carries the byte offset at which parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ditcod
