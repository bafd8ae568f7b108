#pragma once

#include <stdexcept>
#include <string>

namespace imagine {

// Shape or rank incompatibility between operands.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// An id or class index outside its table.
class IndexError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

// Caller violated a documented precondition.
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Well-formed record missing a required field or holding a disallowed value.
class SchemaError : public ParseError {
public:
  using ParseError::ParseError;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace imagine
