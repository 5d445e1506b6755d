#pragma once

// Small two-phase tableau simplex with Bland's rule, written independently of
// the library solver so tests can use it as a reference. Variables are x >= 0;
// upper bounds must be supplied as rows.

#include <vector>

namespace oracle {

enum class Rel { Le, Eq, Ge };

struct Row {
  std::vector<double> a;
  Rel rel;
  double b;
};

struct LpOutcome {
  bool feasible = false;
  bool bounded = true;
  double objective = 0.0;
  std::vector<double> x;
};

LpOutcome textbook_lp(const std::vector<double>& c, const std::vector<Row>& rows);

}  // namespace oracle
