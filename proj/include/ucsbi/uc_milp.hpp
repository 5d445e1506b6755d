#pragma once

// The unit commitment simulator: MILP construction from (fleet, theta,
// demand), schedule extraction, and an independent feasibility checker.

#include "ucsbi/milp.hpp"
#include "ucsbi/uc_core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace ucsbi {

/// Column names ("semantic keys") of the UC program, e.g. g_3_17.
std::string uc_key(const char* family, std::size_t unit, std::size_t step);

/// Builds the UC MILP. Per unit j and step t the columns are g, gbar, k
/// (continuous; k is the cost epigraph) and v, y, z (binary), in that order.
/// Steps are 0-based in code; step -1 denotes the initial condition.
MilpInstance build_milp(const FleetConfig& fleet, const ThetaVector& theta, const DemandProfile& demand);

/// Cost segments of unit j with theta substituted where applicable.
std::vector<CostSegment> effective_segments(const FleetConfig& fleet, const ThetaVector& theta,
                                            std::size_t unit);

enum class ConstraintFamily {
  DemandBalance,
  Reserve,
  Logic,
  RampUp,
  RampDown,
  MinUp,
  MinDown,
  GenerationLimits,
  CapacityCoupling,
};

inline constexpr int kConstraintFamilyCount = 9;

const char* to_string(ConstraintFamily f);

struct Violation {
  ConstraintFamily family;
  int unit;  // -1 for system-wide rows (demand balance, reserve)
  int step;
  double amount;

  std::string describe() const;
};

/// Checks every UC constraint numerically with absolute tolerance `tol`.
/// Binary entries outside {0,1} are reported under Logic.
std::vector<Violation> validate_schedule(const FleetConfig& fleet, const ThetaVector& theta,
                                         const DemandProfile& demand, const Schedule& schedule,
                                         double tol = 1e-6);

/// Schedule from a primal vector of an instance produced by build_milp.
/// Binaries within 1e-6 of {0,1} are rounded; others raise BackendError.
Schedule extract_schedule(const FleetConfig& fleet, const MilpInstance& instance,
                          const std::vector<double>& primal, double objective);

/// Pluggable MILP solver.
class MilpBackend {
 public:
  virtual ~MilpBackend() = default;
  virtual MilpSolution solve(const MilpInstance& instance) const = 0;
  virtual std::string name() const = 0;
};

class EmbeddedBackend final : public MilpBackend {
 public:
  explicit EmbeddedBackend(SolveLimits limits = default_limits()) : limits_(limits) {}
  MilpSolution solve(const MilpInstance& instance) const override;
  std::string name() const override { return "embedded"; }

  /// Exact defaults: the embedded solver is the reference oracle.
  static SolveLimits default_limits() {
    SolveLimits l;
    l.mip_gap = 1e-9;
    return l;
  }

 private:
  SolveLimits limits_;
};

/// G = f(psi, theta, delta). Throws Infeasible, SolverTimeout or BackendError
/// when the backend does not return an optimal solution.
Schedule solve_uc(const FleetConfig& fleet, const ThetaVector& theta, const DemandProfile& demand,
                  const MilpBackend& backend);

}  // namespace ucsbi
