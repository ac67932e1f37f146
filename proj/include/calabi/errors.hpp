#pragma once

#include <stdexcept>
#include <string>

namespace calabi {

enum class ErrorKind {
  ClassViolation,
  Parameter,
  Domain,
  InvalidProfile,
  TimeRange,
  StepFailure,
  BlowUp,
  Refused,
  RootNotFound,
  NumericalInconsistency,
  ParameterRegime,
  Window,
  Range,
  Spacing,
  Io,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace calabi
