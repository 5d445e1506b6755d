#pragma once

#include "ucsbi/milp.hpp"

namespace ucsbi {

/// Exact best-first branch-and-bound over dense-simplex LP relaxations.
///
/// Branching picks the most fractional integer column (ties: lowest index)
/// and creates the down child before the up child; open nodes are ordered by
/// LP bound, then creation order, so the search is fully deterministic.
/// Integral LP solutions are polished by re-solving the LP with the integer
/// columns fixed to their rounded values.
///
/// Throws TooManyBinaries when the instance exceeds limits.max_binaries,
/// LpNumericalFailure on unbounded or stalled relaxations and
/// NodeLimitExceeded when limits.node_limit nodes were explored without
/// closing the gap. Infeasibility is a status, not an error.
MilpSolution bnb_solve(const MilpInstance& instance, const SolveLimits& limits = {});

}  // namespace ucsbi
