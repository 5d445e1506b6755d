#pragma once

#include <stdexcept>
#include <string>

namespace ucsbi {

enum class ErrorKind {
  DimensionMismatch,
  InvalidFleet,
  InvalidConfig,
  Infeasible,
  SolverTimeout,
  BackendError,
  TooManyBinaries,
  LpNumericalFailure,
  NodeLimitExceeded,
  CorruptFile,
  SchemaMismatch,
  ConfigHashMismatch,
  NonFiniteInput,
  NonFiniteLoss,
  NonFiniteGradient,
  NonFiniteDensity,
  RejectionRateTooHigh,
  Io,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ucsbi
