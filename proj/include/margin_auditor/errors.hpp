#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace margin_auditor {

// Base of every error the library throws. exit_code() is the CLI status
// the error maps to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int exit_code)
      : std::runtime_error(what), exit_code_(exit_code) {}

  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, 2) {}
};

// Malformed binary or JSON input. offset is the byte position where the
// problem was detected (0 when not applicable).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")", 2), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(what, 3) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what, 3) {}
};

// Raised when a computation is mathematically undefined for the given input
// (zero spectral norm in a ratio, zero data matrix, failed convergence).
class DegeneracyError : public Error {
 public:
  explicit DegeneracyError(const std::string& what) : Error(what, 4) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")", 5), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace margin_auditor
