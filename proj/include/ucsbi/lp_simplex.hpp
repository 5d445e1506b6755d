#pragma once

#include "ucsbi/milp.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ucsbi {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(LpStatus s);

struct LpResult {
  LpStatus status = LpStatus::IterationLimit;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
};

struct LpOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-10;
  std::size_t iteration_limit = 0;  // 0: automatic
};

/// Solves the continuous relaxation of `instance` with the column bounds
/// replaced by `lower`/`upper`. Dense bounded-variable primal simplex on a
/// full tableau (two phases, artificial columns only for rows whose slack
/// cannot absorb the initial residual). Dantzig pricing, falling back to
/// Bland's rule while pivots stay degenerate.
LpResult solve_lp(const MilpInstance& instance, std::span<const double> lower,
                  std::span<const double> upper, const LpOptions& options = {});

/// Convenience overload using the instance's own bounds.
LpResult solve_lp(const MilpInstance& instance, const LpOptions& options = {});

}  // namespace ucsbi
