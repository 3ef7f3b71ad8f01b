#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qaemb {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number (0 when the
// problem is not tied to a line, e.g. an empty file).
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(format(path, line, what)), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& path, std::size_t line,
                            const std::string& what) {
    std::string msg = path;
    if (line > 0) msg += ":" + std::to_string(line);
    return msg + ": " + what;
  }

  std::size_t line_;
};

// Non-finite values showed up during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Model directory is missing, truncated or inconsistent.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace qaemb
