#pragma once

#include "ucsbi/uc_milp.hpp"

#include <string>

namespace ucsbi {

enum class SolutionAdapter { Native, Cbc };

SolutionAdapter adapter_from_string(const std::string& s);

struct ExternalSolverConfig {
  /// Shell command with placeholders {solver}, {lp_path}, {sol_path}, {gap}
  /// and {time_limit}.
  std::string command_template;
  /// Substituted for {solver}; the UCSBI_SOLVER environment variable wins.
  std::string solver_path;
  SolutionAdapter adapter = SolutionAdapter::Native;
  SolveLimits limits{};
  /// Extra wall-clock seconds granted before the subprocess is killed.
  double kill_grace = 5.0;
};

/// Writes the LP file into a private temporary directory, runs the solver
/// command through /bin/sh, and parses the solution with the configured
/// adapter. Nonzero exit, missing or unparseable output raise BackendError;
/// a solver-reported or watchdog-enforced time limit raises SolverTimeout.
MilpSolution external_solve(const MilpInstance& instance, const ExternalSolverConfig& config);

class ExternalBackend final : public MilpBackend {
 public:
  explicit ExternalBackend(ExternalSolverConfig config) : config_(std::move(config)) {}
  MilpSolution solve(const MilpInstance& instance) const override { return external_solve(instance, config_); }
  std::string name() const override { return "external"; }
  const ExternalSolverConfig& config() const { return config_; }

 private:
  ExternalSolverConfig config_;
};

/// Template for the CBC binary shipped with common Python MILP tooling.
inline constexpr const char* kCbcCommandTemplate =
    "{solver} {lp_path} ratioGap {gap} sec {time_limit} heur off preprocess off gomory off strong 0 solve printingOptions all "
    "solution {sol_path} saveSolution {sol_path}.bin";

/// Path of a CBC executable: $UCSBI_SOLVER, then the path configured at
/// build time, then `cbc` on PATH. Empty when none is usable.
std::string locate_cbc();

}  // namespace ucsbi
