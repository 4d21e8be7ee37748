#pragma once

#include <stdexcept>
#include <string>

namespace mgf {

// Root of every error the library raises. Subclasses map onto the CLI exit
// statuses: ConfigError -> 2, DataError/TaskError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a stale graph, non-scalar loss, and so on.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Two ParamVectors whose segment tables differ.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable input files.
class DataError : public Error {
 public:
  using Error::Error;
};

// A task cannot supply what was asked of it (too few samples, bad class).
class TaskError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgf
