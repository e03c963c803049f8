#pragma once

#include <stdexcept>
#include <string>

namespace dsmo {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParam : Error {
  using Error::Error;
};

struct ConnectivityFailure : Error {
  using Error::Error;
};

struct SchemeMismatch : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct SpectrumViolation : Error {
  using Error::Error;
};

/// Text-format error carrying 1-based line and column of the offending token.
struct ParseError : Error {
  ParseError(const std::string& what, long line_no, long col_no)
      : Error(what + " (line " + std::to_string(line_no) + ", column " +
              std::to_string(col_no) + ")"),
        line(line_no),
        column(col_no) {}
  long line;
  long column;
};

struct EmptyShard : Error {
  using Error::Error;
};

struct NoExactOracle : Error {
  using Error::Error;
};

struct NotBilevel : Error {
  using Error::Error;
};

struct NotCompositional : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

struct NonPositiveValue : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// CSV schema mismatch; mentions the first offending column.
struct SchemaError : Error {
  using Error::Error;
};

/// Configuration error carrying a JSON-pointer path to the offending field.
struct ConfigError : Error {
  ConfigError(const std::string& what, std::string json_pointer)
      : Error(what + " (at " + json_pointer + ")"),
        pointer(std::move(json_pointer)) {}
  std::string pointer;
};

struct AlgorithmInvariantViolation : Error {
  using Error::Error;
};

}  // namespace dsmo
