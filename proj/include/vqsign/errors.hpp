#ifndef VQSIGN_ERRORS_HPP
#define VQSIGN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vqsign {

// Bad configuration or inconsistent arguments supplied by the user. Exit 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization failures. Exit 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed dataset or checkpoint content, with a 1-based line number when
// the source is line-oriented.
struct ParseError : IoError {
  ParseError(const std::string& what, long line_number)
      : IoError(what + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  long line;
};

// Non-finite values encountered during optimization. Exit 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vqsign

#endif  // VQSIGN_ERRORS_HPP
