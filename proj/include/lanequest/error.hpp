#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lanequest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input. `line()` is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what, const std::string& context = {})
      : Error((context.empty() ? "" : context + ": ") + (line ? "line " + std::to_string(line) + ": " : "") + what),
        line_(line),
        detail_(what) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Caller asked for something the numeric state cannot provide (degenerate
/// beliefs, empty roads, no stationary window, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace lanequest
