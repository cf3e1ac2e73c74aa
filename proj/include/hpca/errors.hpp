#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hpca {

/// Coarse error class; the CLI maps each one to a stable exit code.
enum class ErrorCategory { kUsage, kData, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Invalid parameters or configuration (k >= d, l < k, bad synth ranges).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

/// Malformed libsvm input; `line()` is 1-based.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

/// Failure while re-reading a file-backed dataset.
class StreamError : public DataError {
 public:
  StreamError(std::uint64_t byte_offset, const std::string& what)
      : DataError("stream error at byte offset " + std::to_string(byte_offset) + ": " + what),
        byte_offset_(byte_offset) {}

  std::uint64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

/// A desk-scale size guard was exceeded; `guard()` names it.
class GuardError : public DataError {
 public:
  GuardError(const std::string& guard, const std::string& what)
      : DataError(guard + ": " + what), guard_(guard) {}

  const std::string& guard() const noexcept { return guard_; }

 private:
  std::string guard_;
};

/// Malformed or inconsistent model file.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, what) {}
};

class RankDeficient : public NumericError {
 public:
  RankDeficient(std::size_t column, const std::string& what)
      : NumericError(what), column_(column) {}

  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class NoConvergence : public NumericError {
 public:
  using NumericError::NumericError;
};

class AsymmetricMatrix : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace hpca
