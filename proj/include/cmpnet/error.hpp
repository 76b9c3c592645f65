#pragma once

#include <stdexcept>
#include <string>

namespace cmpnet {

/// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataFormat = 3,
  kNumerical = 4,
};

/// Base error; carries the exit code the CLI should map it to.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid argument or configuration value.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ExitCode::kUsage, what) {}
};

/// Malformed, truncated or inconsistent file content, and I/O failures.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ExitCode::kDataFormat, what) {}
};

/// Non-finite values during optimization.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ExitCode::kNumerical, what) {}
};

}  // namespace cmpnet
