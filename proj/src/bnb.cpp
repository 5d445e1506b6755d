#include "ucsbi/bnb.hpp"

#include "ucsbi/errors.hpp"
#include "ucsbi/lp_simplex.hpp"

#include <chrono>
#include <cmath>
#include <queue>

namespace ucsbi {

namespace {

constexpr double kIntegralityTol = 1e-6;

struct Node {
  double bound;
  std::size_t seq;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.seq > b.seq;
  }
};

int most_fractional(const MilpInstance& inst, const std::vector<double>& x) {
  int best = -1;
  double best_frac = kIntegralityTol;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!inst.variables[j].integer) continue;
    const double frac = std::abs(x[j] - std::round(x[j]));
    if (frac > best_frac + 1e-12) {
      best_frac = frac;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace

MilpSolution bnb_solve(const MilpInstance& instance, const SolveLimits& limits) {
  const std::size_t n_int = instance.integer_count();
  if (n_int > limits.max_binaries)
    throw Error(ErrorKind::TooManyBinaries, std::to_string(n_int) + " integer columns exceed the cap of " +
                                                std::to_string(limits.max_binaries));

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  Node root;
  root.seq = 0;
  root.bound = -kInf;
  for (const auto& v : instance.variables) {
    double lo = v.lower, hi = v.upper;
    if (v.integer) {
      lo = std::ceil(lo - kIntegralityTol);
      hi = std::floor(hi + kIntegralityTol);
    }
    root.lower.push_back(lo);
    root.upper.push_back(hi);
  }

  MilpSolution sol;
  sol.status = SolveStatus::Infeasible;
  bool have_incumbent = false;
  double incumbent = kInf;
  std::vector<double> incumbent_x;

  auto cutoff = [&] {
    return std::max(1e-9, limits.mip_gap * std::abs(incumbent));
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  open.push(std::move(root));
  std::size_t seq = 1;
  std::size_t explored = 0;
  double best_open_bound = -kInf;

  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    best_open_bound = node.bound;
    if (have_incumbent && node.bound >= incumbent - cutoff()) break;  // best-first: nothing left can improve
    if (explored >= limits.node_limit)
      throw Error(ErrorKind::NodeLimitExceeded, std::to_string(explored) + " nodes explored");
    if (elapsed() > limits.time_limit) {
      sol.status = SolveStatus::TimeLimit;
      sol.message = "time limit reached after " + std::to_string(explored) + " nodes";
      break;
    }
    ++explored;

    LpResult lp = solve_lp(instance, node.lower, node.upper);
    if (lp.status == LpStatus::Infeasible) continue;
    if (lp.status != LpStatus::Optimal)
      throw Error(ErrorKind::LpNumericalFailure, std::string("LP relaxation ") + to_string(lp.status));
    if (have_incumbent && lp.objective >= incumbent - cutoff()) continue;

    const int branch_col = most_fractional(instance, lp.x);
    if (branch_col < 0) {
      // Integral: fix integer columns at their rounded values and re-solve.
      std::vector<double> lo = node.lower, hi = node.upper;
      for (std::size_t j = 0; j < lp.x.size(); ++j)
        if (instance.variables[j].integer) lo[j] = hi[j] = std::round(lp.x[j]);
      LpResult polished = solve_lp(instance, lo, hi);
      if (polished.status != LpStatus::Optimal) polished = lp;
      for (std::size_t j = 0; j < polished.x.size(); ++j)
        if (instance.variables[j].integer) polished.x[j] = std::round(polished.x[j]);
      const double obj = instance.evaluate(polished.x);
      if (!have_incumbent || obj < incumbent) {
        have_incumbent = true;
        incumbent = obj;
        incumbent_x = std::move(polished.x);
      }
      continue;
    }

    const double value = lp.x[static_cast<std::size_t>(branch_col)];
    Node down{lp.objective, seq++, node.lower, node.upper};
    down.upper[static_cast<std::size_t>(branch_col)] = std::floor(value);
    Node up{lp.objective, seq++, std::move(node.lower), std::move(node.upper)};
    up.lower[static_cast<std::size_t>(branch_col)] = std::ceil(value);
    open.push(std::move(down));
    open.push(std::move(up));
  }

  sol.nodes = explored;
  if (have_incumbent) {
    if (sol.status != SolveStatus::TimeLimit) sol.status = SolveStatus::Optimal;
    sol.primal = std::move(incumbent_x);
    sol.objective = incumbent;
    double bound = open.empty() ? incumbent : std::min(incumbent, best_open_bound);
    if (sol.status == SolveStatus::Optimal) bound = std::max(bound, incumbent - cutoff());
    sol.mip_gap = std::abs(incumbent - bound) / std::max(1.0, std::abs(incumbent));
  } else if (sol.status != SolveStatus::TimeLimit) {
    sol.status = SolveStatus::Infeasible;
  }
  return sol;
}

}  // namespace ucsbi
