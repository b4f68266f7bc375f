#pragma once

#include <stdexcept>
#include <string>

namespace pagb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad configuration, violated precondition, malformed file.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Malformed text input, carrying the 1-based line number.
class ParseError : public ValidationError {
public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace pagb
