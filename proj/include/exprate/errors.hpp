#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace exprate {

/// Base of every error raised by the library. The CLI maps each subclass to
/// its own exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

/// Cross-record inconsistency (referential integrity, claim counts).
class ConsistencyError : public Error {
 public:
  ConsistencyError(const std::string& what, std::vector<std::string> keys)
      : Error(what), keys_(std::move(keys)) {}
  explicit ConsistencyError(const std::string& what) : Error(what) {}
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  std::vector<std::string> keys_;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Column labels or covariate schema do not match a fitted model.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Iterative fit stopped at max_iter without meeting the tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Estimates ran off to infinity (separation, all-zero response, overflow).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Cross-validation folds cannot be formed (e.g. a fold without claims).
class FoldAssignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace exprate
