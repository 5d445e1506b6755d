#include "ucsbi/milp.hpp"

#include "ucsbi/errors.hpp"

#include <cmath>

namespace ucsbi {

int MilpInstance::add_variable(std::string name, double lower, double upper, bool integer) {
  const int col = static_cast<int>(variables.size());
  variable_index.emplace(name, col);
  variables.push_back(Variable{std::move(name), lower, upper, integer});
  return col;
}

void MilpInstance::add_constraint(std::string name, SparseRow row, Relation rel, double rhs) {
  constraints.push_back(Constraint{std::move(name), std::move(row), rel, rhs});
}

std::size_t MilpInstance::integer_count() const {
  std::size_t n = 0;
  for (const auto& v : variables) n += v.integer ? 1 : 0;
  return n;
}

int MilpInstance::column(const std::string& name) const {
  auto it = variable_index.find(name);
  if (it == variable_index.end()) throw Error(ErrorKind::DimensionMismatch, "unknown column " + name);
  return it->second;
}

double MilpInstance::evaluate(const std::vector<double>& x) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < objective.size(); ++k)
    acc += objective.value[k] * x[static_cast<std::size_t>(objective.index[k])];
  return acc;
}

std::vector<std::string> MilpInstance::check() const {
  std::vector<std::string> out;
  const int n = static_cast<int>(variables.size());
  for (const auto& v : variables)
    if (!(v.lower <= v.upper)) out.push_back("bounds of " + v.name + " are inverted");
  auto check_row = [&](const SparseRow& r, const std::string& what) {
    if (r.index.size() != r.value.size()) out.push_back(what + ": index/value size mismatch");
    for (int c : r.index)
      if (c < 0 || c >= n) {
        out.push_back(what + ": undefined column " + std::to_string(c));
        break;
      }
  };
  check_row(objective, "objective");
  for (const auto& c : constraints) check_row(c.row, c.name);
  return out;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::TimeLimit: return "TimeLimit";
    case SolveStatus::BackendError: return "BackendError";
  }
  return "Unknown";
}

}  // namespace ucsbi
