#include "ucsbi/uc_milp.hpp"

#include "ucsbi/bnb.hpp"
#include "ucsbi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ucsbi {

std::string uc_key(const char* family, std::size_t unit, std::size_t step) {
  return std::string(family) + "_" + std::to_string(unit) + "_" + std::to_string(step);
}

std::vector<CostSegment> effective_segments(const FleetConfig& fleet, const ThetaVector& theta,
                                            std::size_t unit) {
  const UnitParams& u = fleet.units[unit];
  if (!u.cost_is_theta) return u.cost_segments;
  std::size_t slot = 0;
  for (std::size_t j = 0; j < unit; ++j) slot += fleet.units[j].cost_is_theta ? 1 : 0;
  return {CostSegment{theta[slot], 0.0}};
}

namespace {

struct Columns {
  int g, gbar, k, v, y, z;
};

}  // namespace

MilpInstance build_milp(const FleetConfig& fleet, const ThetaVector& theta, const DemandProfile& demand) {
  require_valid_fleet(fleet);
  require_valid_theta(fleet, theta);
  require_valid_demand(fleet, demand);

  const std::size_t J = fleet.unit_count();
  const std::size_t T = static_cast<std::size_t>(fleet.horizon);
  MilpInstance inst;
  std::vector<std::vector<Columns>> col(J, std::vector<Columns>(T));

  for (std::size_t j = 0; j < J; ++j) {
    const UnitParams& u = fleet.units[j];
    const std::size_t L = std::min<std::size_t>(T, static_cast<std::size_t>(u.init_on_steps));
    const std::size_t F = std::min<std::size_t>(T, static_cast<std::size_t>(u.init_off_steps));
    for (std::size_t t = 0; t < T; ++t) {
      Columns& c = col[j][t];
      c.g = inst.add_variable(uc_key("g", j, t), 0.0, u.gen_max, false);
      c.gbar = inst.add_variable(uc_key("gbar", j, t), 0.0, u.gen_max, false);
      c.k = inst.add_variable(uc_key("k", j, t), -kInf, kInf, false);
      double v_lo = 0.0, v_hi = 1.0;
      if (t < L) v_lo = 1.0;  // still inside the initial must-run window
      if (t < F) v_hi = 0.0;  // still inside the initial must-stay-off window
      c.v = inst.add_variable(uc_key("v", j, t), v_lo, v_hi, true);
      c.y = inst.add_variable(uc_key("y", j, t), 0.0, 1.0, true);
      c.z = inst.add_variable(uc_key("z", j, t), 0.0, 1.0, true);
      inst.objective.add(c.k, 1.0);
      if (u.startup_cost != 0.0) inst.objective.add(c.y, u.startup_cost);
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    SparseRow bal, res;
    for (std::size_t j = 0; j < J; ++j) {
      bal.add(col[j][t].g, 1.0);
      res.add(col[j][t].gbar, 1.0);
    }
    const double d = demand[t];
    inst.add_constraint("demand_" + std::to_string(t), std::move(bal), Relation::Equal, d);
    inst.add_constraint("reserve_" + std::to_string(t), std::move(res), Relation::GreaterEqual,
                        d + fleet.reserve_fraction * d);
  }

  for (std::size_t j = 0; j < J; ++j) {
    const UnitParams& u = fleet.units[j];
    const auto segments = effective_segments(fleet, theta, j);
    const double v0 = u.init_committed ? 1.0 : 0.0;
    const double g0 = u.init_output;
    const std::size_t L = std::min<std::size_t>(T, static_cast<std::size_t>(u.init_on_steps));
    const std::size_t F = std::min<std::size_t>(T, static_cast<std::size_t>(u.init_off_steps));

    for (std::size_t t = 0; t < T; ++t) {
      const Columns& c = col[j][t];
      const Columns* p = t > 0 ? &col[j][t - 1] : nullptr;
      auto name = [&](const char* f) { return uc_key(f, j, t); };

      for (std::size_t s = 0; s < segments.size(); ++s) {
        SparseRow r;
        r.add(c.k, 1.0);
        if (segments[s].slope != 0.0) r.add(c.g, -segments[s].slope);
        inst.add_constraint(name("cost") + "_" + std::to_string(s), std::move(r), Relation::GreaterEqual,
                            segments[s].intercept);
      }

      {  // v(t-1) - v(t) + y(t) - z(t) = 0
        SparseRow r;
        double rhs = 0.0;
        if (p) r.add(p->v, 1.0); else rhs -= v0;
        r.add(c.v, -1.0);
        r.add(c.y, 1.0);
        r.add(c.z, -1.0);
        inst.add_constraint(name("logic"), std::move(r), Relation::Equal, rhs);
      }
      {  // g(t) - g(t-1) <= RU v(t-1) + SU y(t)
        SparseRow r;
        double rhs = 0.0;
        r.add(c.g, 1.0);
        if (p) {
          r.add(p->g, -1.0);
          r.add(p->v, -u.ramp_up);
        } else {
          rhs += g0 + u.ramp_up * v0;
        }
        r.add(c.y, -u.startup_rate);
        inst.add_constraint(name("rampup"), std::move(r), Relation::LessEqual, rhs);
      }
      {  // g(t-1) - g(t) <= RD v(t) + SD z(t)
        SparseRow r;
        double rhs = 0.0;
        if (p) r.add(p->g, 1.0); else rhs -= g0;
        r.add(c.g, -1.0);
        r.add(c.v, -u.ramp_down);
        r.add(c.z, -u.shutdown_rate);
        inst.add_constraint(name("rampdown"), std::move(r), Relation::LessEqual, rhs);
      }
      // Minimum up/down windows apply from step L+1 (resp. F+1), 1-based.
      const std::size_t step1 = t + 1;
      if (step1 >= L + 1 && u.min_up > 0) {
        SparseRow r;
        const std::size_t first = step1 >= static_cast<std::size_t>(u.min_up) ? step1 - u.min_up + 1 : 1;
        for (std::size_t k = first; k <= step1; ++k) r.add(col[j][k - 1].y, 1.0);
        r.add(c.v, -1.0);
        inst.add_constraint(name("minup"), std::move(r), Relation::LessEqual, 0.0);
      }
      if (step1 >= F + 1 && u.min_down > 0) {
        SparseRow r;
        r.add(c.v, 1.0);
        const std::size_t first = step1 >= static_cast<std::size_t>(u.min_down) ? step1 - u.min_down + 1 : 1;
        for (std::size_t k = first; k <= step1; ++k) r.add(col[j][k - 1].z, 1.0);
        inst.add_constraint(name("mindown"), std::move(r), Relation::LessEqual, 1.0);
      }
      {  // Gmin v <= g <= gbar <= Gmax v
        SparseRow lo, mid, hi;
        lo.add(c.v, u.gen_min);
        lo.add(c.g, -1.0);
        inst.add_constraint(name("genmin"), std::move(lo), Relation::LessEqual, 0.0);
        mid.add(c.g, 1.0);
        mid.add(c.gbar, -1.0);
        inst.add_constraint(name("genavail"), std::move(mid), Relation::LessEqual, 0.0);
        hi.add(c.gbar, 1.0);
        hi.add(c.v, -u.gen_max);
        inst.add_constraint(name("genmax"), std::move(hi), Relation::LessEqual, 0.0);
      }
      {  // gbar(t) <= g(t-1) + RU v(t-1) + SU y(t)
        SparseRow r;
        double rhs = 0.0;
        r.add(c.gbar, 1.0);
        if (p) {
          r.add(p->g, -1.0);
          r.add(p->v, -u.ramp_up);
        } else {
          rhs += g0 + u.ramp_up * v0;
        }
        r.add(c.y, -u.startup_rate);
        inst.add_constraint(name("capramp"), std::move(r), Relation::LessEqual, rhs);
      }
      {  // gbar(t) <= Gmax [v(t) - z(t+1)] + z(t+1) SD, with z past the horizon = 0
        SparseRow r;
        r.add(c.gbar, 1.0);
        r.add(c.v, -u.gen_max);
        if (t + 1 < T) r.add(col[j][t + 1].z, u.gen_max - u.shutdown_rate);
        inst.add_constraint(name("capshut"), std::move(r), Relation::LessEqual, 0.0);
      }
    }
  }
  return inst;
}

const char* to_string(ConstraintFamily f) {
  switch (f) {
    case ConstraintFamily::DemandBalance: return "demand_balance";
    case ConstraintFamily::Reserve: return "reserve";
    case ConstraintFamily::Logic: return "logic";
    case ConstraintFamily::RampUp: return "ramp_up";
    case ConstraintFamily::RampDown: return "ramp_down";
    case ConstraintFamily::MinUp: return "min_up";
    case ConstraintFamily::MinDown: return "min_down";
    case ConstraintFamily::GenerationLimits: return "generation_limits";
    case ConstraintFamily::CapacityCoupling: return "capacity_coupling";
  }
  return "unknown";
}

std::string Violation::describe() const {
  std::ostringstream os;
  os << to_string(family) << " unit=" << unit << " t=" << step << " by " << amount;
  return os.str();
}

std::vector<Violation> validate_schedule(const FleetConfig& fleet, const ThetaVector& theta,
                                         const DemandProfile& demand, const Schedule& s, double tol) {
  const auto J = static_cast<Eigen::Index>(fleet.unit_count());
  const auto T = static_cast<Eigen::Index>(fleet.horizon);
  if (theta.size() != fleet.theta_dim() || demand.size() != static_cast<std::size_t>(T))
    throw Error(ErrorKind::DimensionMismatch, "theta/demand do not match fleet");
  auto shape_ok = [&](const auto& m) { return m.rows() == J && m.cols() == T; };
  if (!shape_ok(s.g) || !shape_ok(s.g_bar) || !shape_ok(s.v) || !shape_ok(s.y) || !shape_ok(s.z))
    throw Error(ErrorKind::DimensionMismatch, "schedule matrices do not match fleet x horizon");

  std::vector<Violation> out;
  // Records a violation when lhs exceeds rhs by more than tol.
  auto le = [&](ConstraintFamily f, Eigen::Index j, Eigen::Index t, double lhs, double rhs) {
    if (lhs > rhs + tol) out.push_back({f, static_cast<int>(j), static_cast<int>(t), lhs - rhs});
  };
  auto eq = [&](ConstraintFamily f, Eigen::Index j, Eigen::Index t, double lhs, double rhs) {
    if (std::abs(lhs - rhs) > tol) out.push_back({f, static_cast<int>(j), static_cast<int>(t), lhs - rhs});
  };

  for (Eigen::Index t = 0; t < T; ++t) {
    const double d = demand[static_cast<std::size_t>(t)];
    eq(ConstraintFamily::DemandBalance, -1, t, s.g.col(t).sum(), d);
    le(ConstraintFamily::Reserve, -1, t, d + fleet.reserve_fraction * d, s.g_bar.col(t).sum());
  }

  for (Eigen::Index j = 0; j < J; ++j) {
    const UnitParams& u = fleet.units[static_cast<std::size_t>(j)];
    const double v0 = u.init_committed ? 1.0 : 0.0;
    const double g0 = u.init_output;
    const Eigen::Index L = std::min<Eigen::Index>(T, u.init_on_steps);
    const Eigen::Index F = std::min<Eigen::Index>(T, u.init_off_steps);
    for (Eigen::Index t = 0; t < T; ++t) {
      const double v = s.v(j, t), y = s.y(j, t), z = s.z(j, t);
      const double g = s.g(j, t), gb = s.g_bar(j, t);
      const double v_prev = t > 0 ? s.v(j, t - 1) : v0;
      const double g_prev = t > 0 ? s.g(j, t - 1) : g0;

      for (int b : {s.v(j, t), s.y(j, t), s.z(j, t)})
        if (b != 0 && b != 1) out.push_back({ConstraintFamily::Logic, static_cast<int>(j), static_cast<int>(t), 1.0});
      eq(ConstraintFamily::Logic, j, t, v_prev - v + y - z, 0.0);

      le(ConstraintFamily::RampUp, j, t, g - g_prev, u.ramp_up * v_prev + u.startup_rate * y);
      le(ConstraintFamily::RampDown, j, t, g_prev - g, u.ramp_down * v + u.shutdown_rate * z);

      // Initial windows force the commitment state.
      if (t < L) eq(ConstraintFamily::MinUp, j, t, v, 1.0);
      if (t < F) eq(ConstraintFamily::MinDown, j, t, v, 0.0);
      if (t >= L && u.min_up > 0) {
        double started = 0.0;
        for (Eigen::Index k = std::max<Eigen::Index>(0, t - u.min_up + 1); k <= t; ++k) started += s.y(j, k);
        le(ConstraintFamily::MinUp, j, t, started, v);
      }
      if (t >= F && u.min_down > 0) {
        double stopped = 0.0;
        for (Eigen::Index k = std::max<Eigen::Index>(0, t - u.min_down + 1); k <= t; ++k) stopped += s.z(j, k);
        le(ConstraintFamily::MinDown, j, t, v + stopped, 1.0);
      }

      le(ConstraintFamily::GenerationLimits, j, t, u.gen_min * v, g);
      le(ConstraintFamily::GenerationLimits, j, t, g, gb);
      le(ConstraintFamily::GenerationLimits, j, t, gb, u.gen_max * v);
      le(ConstraintFamily::GenerationLimits, j, t, 0.0, g);

      le(ConstraintFamily::CapacityCoupling, j, t, gb, g_prev + u.ramp_up * v_prev + u.startup_rate * y);
      const double z_next = t + 1 < T ? s.z(j, t + 1) : 0.0;
      le(ConstraintFamily::CapacityCoupling, j, t, gb, u.gen_max * (v - z_next) + z_next * u.shutdown_rate);
    }
  }
  return out;
}

Schedule extract_schedule(const FleetConfig& fleet, const MilpInstance& instance,
                          const std::vector<double>& primal, double objective) {
  if (primal.size() != instance.column_count())
    throw Error(ErrorKind::BackendError, "primal vector length does not match the instance");
  const std::size_t J = fleet.unit_count();
  const std::size_t T = static_cast<std::size_t>(fleet.horizon);
  Schedule s = Schedule::zeros(J, T);
  auto binary = [&](const std::string& key) {
    const double x = primal[static_cast<std::size_t>(instance.column(key))];
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-6 || (r != 0.0 && r != 1.0))
      throw Error(ErrorKind::BackendError, key + " is not binary: " + std::to_string(x));
    return static_cast<int>(r);
  };
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t) {
      const auto r = static_cast<Eigen::Index>(j), c = static_cast<Eigen::Index>(t);
      s.g(r, c) = primal[static_cast<std::size_t>(instance.column(uc_key("g", j, t)))];
      s.g_bar(r, c) = primal[static_cast<std::size_t>(instance.column(uc_key("gbar", j, t)))];
      s.v(r, c) = binary(uc_key("v", j, t));
      s.y(r, c) = binary(uc_key("y", j, t));
      s.z(r, c) = binary(uc_key("z", j, t));
    }
  s.objective_value = objective;
  return s;
}

MilpSolution EmbeddedBackend::solve(const MilpInstance& instance) const { return bnb_solve(instance, limits_); }

Schedule solve_uc(const FleetConfig& fleet, const ThetaVector& theta, const DemandProfile& demand,
                  const MilpBackend& backend) {
  const MilpInstance inst = build_milp(fleet, theta, demand);
  const MilpSolution sol = backend.solve(inst);
  switch (sol.status) {
    case SolveStatus::Optimal: break;
    case SolveStatus::Infeasible:
      throw Error(ErrorKind::Infeasible, "UC instance infeasible (check DSM capacity): " + sol.message);
    case SolveStatus::TimeLimit: throw Error(ErrorKind::SolverTimeout, backend.name() + ": " + sol.message);
    case SolveStatus::BackendError: throw Error(ErrorKind::BackendError, backend.name() + ": " + sol.message);
  }
  return extract_schedule(fleet, inst, sol.primal, sol.objective);
}

}  // namespace ucsbi
