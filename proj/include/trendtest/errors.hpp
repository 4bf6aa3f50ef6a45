#pragma once

#include <stdexcept>
#include <string>

namespace trendtest {

// Input data violates a documented precondition or invariant.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required column is missing or a column mapping is inconsistent.
class SchemaError : public std::runtime_error {
public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// A cell could not be parsed; message carries the 1-based data row index.
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// A cross-fitting fold cannot be trained (class missing, too few units).
class FoldError : public std::runtime_error {
public:
  explicit FoldError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical guard tripped (overflowing weights, failed factorization).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trendtest
