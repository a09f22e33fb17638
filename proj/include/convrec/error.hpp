#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace convrec {

// Exception hierarchy. The CLI maps each family onto a stable exit code:
// ConfigError -> 2, DataError/FormatError/CheckpointMismatch -> 3,
// NumericError -> 4.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace convrec
