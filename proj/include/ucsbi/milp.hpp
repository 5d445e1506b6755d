#pragma once

// Generic mixed-integer linear program container shared by the UC builder,
// the embedded branch-and-bound solver and the LP-file bridge.

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ucsbi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Relation { LessEqual, Equal, GreaterEqual };

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  bool integer = false;
};

struct SparseRow {
  std::vector<int> index;
  std::vector<double> value;

  void add(int col, double coef) {
    index.push_back(col);
    value.push_back(coef);
  }
  std::size_t size() const { return index.size(); }
};

struct Constraint {
  std::string name;
  SparseRow row;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

/// Minimization problem. variable_index maps names to column positions.
struct MilpInstance {
  std::vector<Variable> variables;
  SparseRow objective;
  std::vector<Constraint> constraints;
  std::map<std::string, int> variable_index;

  int add_variable(std::string name, double lower, double upper, bool integer);
  void add_constraint(std::string name, SparseRow row, Relation rel, double rhs);

  std::size_t column_count() const { return variables.size(); }
  std::size_t integer_count() const;
  int column(const std::string& name) const;  // throws if absent

  /// Objective value of a primal vector.
  double evaluate(const std::vector<double>& x) const;
  /// Structural check: bounds ordered, rows reference defined columns.
  std::vector<std::string> check() const;
};

enum class SolveStatus { Optimal, Infeasible, TimeLimit, BackendError };

const char* to_string(SolveStatus s);

struct MilpSolution {
  SolveStatus status = SolveStatus::BackendError;
  std::vector<double> primal;
  double objective = 0.0;
  double mip_gap = 0.0;
  std::size_t nodes = 0;
  std::string message;
};

struct SolveLimits {
  /// Relative optimality gap handed to the backend.
  double mip_gap = 1e-6;
  /// Seconds; <= 0 means "give up immediately" for backends that support it.
  double time_limit = 60.0;
  std::size_t max_binaries = 60;
  std::size_t node_limit = 500000;
};

}  // namespace ucsbi
