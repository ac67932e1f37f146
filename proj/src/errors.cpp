#include "calabi/errors.hpp"

namespace calabi {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ClassViolation: return "class-violation";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::InvalidProfile: return "invalid-profile";
    case ErrorKind::TimeRange: return "time-range";
    case ErrorKind::StepFailure: return "step-failure";
    case ErrorKind::BlowUp: return "blow-up";
    case ErrorKind::Refused: return "refused";
    case ErrorKind::RootNotFound: return "root-not-found";
    case ErrorKind::NumericalInconsistency: return "numerical-inconsistency";
    case ErrorKind::ParameterRegime: return "parameter-regime";
    case ErrorKind::Window: return "window";
    case ErrorKind::Range: return "range";
    case ErrorKind::Spacing: return "spacing";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace calabi
