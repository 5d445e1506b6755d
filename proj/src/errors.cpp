#include "ucsbi/errors.hpp"

namespace ucsbi {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidFleet: return "InvalidFleet";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::SolverTimeout: return "SolverTimeout";
    case ErrorKind::BackendError: return "BackendError";
    case ErrorKind::TooManyBinaries: return "TooManyBinaries";
    case ErrorKind::LpNumericalFailure: return "LpNumericalFailure";
    case ErrorKind::NodeLimitExceeded: return "NodeLimitExceeded";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::ConfigHashMismatch: return "ConfigHashMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::NonFiniteDensity: return "NonFiniteDensity";
    case ErrorKind::RejectionRateTooHigh: return "RejectionRateTooHigh";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

}  // namespace ucsbi
