#pragma once

#include <stdexcept>
#include <string>

namespace tabhash {

// Argument outside the mathematical domain of an operation (p < 2, M <= 0, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Instance too large for exhaustive enumeration or an in-memory buffer.
class SizeError : public std::length_error {
 public:
  explicit SizeError(const std::string& what) : std::length_error(what) {}
};

// Parameters outside the range a construction is defined for.
class RangeError : public std::out_of_range {
 public:
  explicit RangeError(const std::string& what) : std::out_of_range(what) {}
};

// Malformed descriptor string or config file.
class ParseError : public std::invalid_argument {
 public:
  explicit ParseError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace tabhash
