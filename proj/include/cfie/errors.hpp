#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfie {

/// Base for every error the library raises. The CLI maps subclasses onto
/// process exit codes (usage 1, data 2, runtime 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data errors.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class StructureError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PathError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// Programming / usage errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

// Runtime failures.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfie
