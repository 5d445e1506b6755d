#pragma once

// Exhaustive reference for tiny UC instances: enumerate every commitment
// trajectory (v, y, z) that satisfies the binary-only rules, solve the
// remaining dispatch LP with the textbook simplex and keep the minimum.

#include "ucsbi/uc_core.hpp"

#include <optional>
#include <random>

namespace oracle {

struct UcOracleResult {
  double objective;
  std::size_t lps_solved;
};

/// nullopt when no commitment pattern admits a feasible dispatch.
std::optional<UcOracleResult> uc_oracle(const ucsbi::FleetConfig& fleet, const ucsbi::ThetaVector& theta,
                                        const ucsbi::DemandProfile& demand);

struct TinyInstance {
  ucsbi::FleetConfig fleet;
  ucsbi::ThetaVector theta;
  ucsbi::DemandProfile demand;
};

/// Random valid instance with 1-2 units and 1-4 steps. Costs are non-negative.
TinyInstance random_tiny_instance(std::mt19937_64& rng);

/// The two-unit, T = 3 fixture used by several tests.
TinyInstance two_unit_fixture();

}  // namespace oracle
