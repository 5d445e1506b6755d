#pragma once

// CPLEX-LP bridge for external MILP solvers. The grammar written and read
// here is documented in docs/formats.md.

#include "ucsbi/milp.hpp"

#include <map>
#include <string>
#include <vector>

namespace ucsbi {

/// Minimize / Subject To / Bounds / Generals / Binaries / End, one name per
/// column (the instance's semantic keys), numbers with 17 significant digits.
/// Integer columns with bounds [0,1] are listed under Binaries; any other
/// integer column goes to Generals. Bounds other than [0, +inf) for
/// continuous and [0, 1] for binary columns get an explicit bound line.
std::string export_lp(const MilpInstance& instance);

/// Reads the subset of CPLEX-LP produced by export_lp (plus the usual
/// spelling variants of section keywords). Columns are numbered in order of
/// first appearance. Throws CorruptFile on syntax errors.
MilpInstance parse_lp(const std::string& text);

/// Solver output mapped back to names, independent of the solver.
struct NamedSolution {
  SolveStatus status = SolveStatus::BackendError;
  double objective = 0.0;
  std::map<std::string, double> values;
  std::string message;
};

/// Native format: "status=<Optimal|Infeasible|TimeLimit|BackendError>",
/// "objective=<number>", then one "<name>=<value>" line per column.
std::string write_native_solution(const MilpInstance& instance, const MilpSolution& solution);
NamedSolution parse_native_solution(const std::string& text);

/// CBC adapter: the text file written by `printingOptions all solution`
/// supplies status, column order and names; the binary file written by
/// `saveSolution` (if non-empty) supplies full-precision values. The text
/// file lists `row_count` row activities before the columns.
NamedSolution parse_cbc_solution(const std::string& text, const std::string& binary, std::size_t row_count);

/// Primal vector in instance column order. Missing columns raise BackendError.
std::vector<double> to_primal(const MilpInstance& instance, const NamedSolution& named);

}  // namespace ucsbi
