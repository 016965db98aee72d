#pragma once

#include <stdexcept>
#include <string>

namespace forumstrat {

/// Broad failure category; the CLI maps these onto exit codes.
enum class ErrorKind {
  Validation,  // bad arguments or configuration (exit 2)
  Data,        // input data violates a contract (exit 3)
  NotFound,    // referenced entity does not exist (exit 3)
  Infeasible,  // request cannot be satisfied at this scale (exit 3)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what)
      : Error(ErrorKind::NotFound, what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what)
      : Error(ErrorKind::Infeasible, what) {}
};

/// A malformed or conflicting input record, tagged with its 1-based line.
class IngestError : public DataError {
 public:
  IngestError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace forumstrat
