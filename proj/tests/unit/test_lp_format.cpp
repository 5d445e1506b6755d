#include "ucsbi/bnb.hpp"
#include "ucsbi/errors.hpp"
#include "ucsbi/external_backend.hpp"
#include "ucsbi/lp_format.hpp"
#include "ucsbi/uc_milp.hpp"

#include "uc_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace ucsbi;

namespace {

std::size_t count_names_in_section(const std::string& lp, const std::string& section) {
  std::istringstream in(lp);
  std::string line;
  bool inside = false;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line == section) {
      inside = true;
      continue;
    }
    if (inside && !line.empty() && line[0] != ' ') break;
    if (inside) {
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) ++n;
    }
  }
  return n;
}

FleetConfig one_unit_one_step() {
  FleetConfig f;
  f.horizon = 1;
  UnitParams u;
  u.gen_max = 10;
  u.ramp_up = u.ramp_down = u.startup_rate = u.shutdown_rate = 10;
  u.cost_is_theta = true;
  u.cost_segments = {{1.0, 0.0}};
  f.units = {u};
  return f;
}

}  // namespace

TEST_CASE("LP export skeleton") {
  MilpInstance empty;
  const std::string text = export_lp(empty);
  CHECK(text.find("Minimize") != std::string::npos);
  CHECK(text.find("End") != std::string::npos);
}

TEST_CASE("one unit, one step declares three binaries") {
  const MilpInstance inst = build_milp(one_unit_one_step(), ThetaVector{{5.0}}, DemandProfile{{4.0}});
  const std::string lp = export_lp(inst);
  CHECK(count_names_in_section(lp, "Binaries") == 3);
  CHECK(lp.find("k_0_0 free") != std::string::npos);
}

TEST_CASE("export then parse reproduces the instance") {
  const auto fx = oracle::two_unit_fixture();
  const MilpInstance inst = build_milp(fx.fleet, fx.theta, fx.demand);
  const MilpInstance back = parse_lp(export_lp(inst));
  REQUIRE(back.column_count() == inst.column_count());
  REQUIRE(back.constraints.size() == inst.constraints.size());
  for (std::size_t j = 0; j < inst.column_count(); ++j) {
    const auto& v = inst.variables[j];
    const auto& w = back.variables[static_cast<std::size_t>(back.column(v.name))];
    CHECK(v.lower == w.lower);
    CHECK(v.upper == w.upper);
    CHECK(v.integer == w.integer);
  }
  // Same optimum through the parsed copy.
  const MilpSolution a = bnb_solve(inst, EmbeddedBackend::default_limits());
  const MilpSolution b = bnb_solve(back, EmbeddedBackend::default_limits());
  REQUIRE(a.status == SolveStatus::Optimal);
  REQUIRE(b.status == SolveStatus::Optimal);
  CHECK(std::abs(a.objective - b.objective) < 1e-9);
}

TEST_CASE("coefficients survive with all 17 digits") {
  MilpInstance m;
  const int x = m.add_variable("x", 0.1 + 0.2, 1.0 / 3.0 + 5.0, false);
  m.objective.add(x, std::nextafter(1.0, 2.0));
  SparseRow r;
  r.add(x, -7.123456789012345e-5);
  m.add_constraint("c0", r, Relation::GreaterEqual, -1e300);
  const MilpInstance back = parse_lp(export_lp(m));
  CHECK(back.variables[0].lower == 0.1 + 0.2);
  CHECK(back.variables[0].upper == 1.0 / 3.0 + 5.0);
  CHECK(back.objective.value[0] == std::nextafter(1.0, 2.0));
  CHECK(back.constraints[0].row.value[0] == -7.123456789012345e-5);
  CHECK(back.constraints[0].rhs == -1e300);
}

TEST_CASE("LP parser rejects garbage") {
  CHECK_THROWS_AS(parse_lp("Minimize\n obj: 3 x +\nSubject To\n c: x >= \nEnd\n"), Error);
  CHECK_THROWS_AS(parse_lp("this is not an lp file"), Error);
}

TEST_CASE("native solution format round trip") {
  const auto fx = oracle::two_unit_fixture();
  const MilpInstance inst = build_milp(fx.fleet, fx.theta, fx.demand);
  const MilpSolution sol = bnb_solve(inst, EmbeddedBackend::default_limits());
  const NamedSolution named = parse_native_solution(write_native_solution(inst, sol));
  CHECK(named.status == SolveStatus::Optimal);
  CHECK(named.objective == sol.objective);
  CHECK(to_primal(inst, named) == sol.primal);
  CHECK_THROWS_AS(parse_native_solution("objective=3\n"), Error);
  CHECK_THROWS_AS(parse_native_solution("status=Optimal\nx=abc\n"), Error);
  CHECK(parse_native_solution("# comment\nstatus=Infeasible\n").status == SolveStatus::Infeasible);
}

TEST_CASE("external solve failures") {
  const MilpInstance inst = build_milp(one_unit_one_step(), ThetaVector{{5.0}}, DemandProfile{{4.0}});
  ExternalSolverConfig cfg;
  cfg.adapter = SolutionAdapter::Native;

  SUBCASE("missing executable") {
    cfg.command_template = "{solver} {lp_path} {sol_path}";
    cfg.solver_path = "/nonexistent/solver-binary";
    try {
      external_solve(inst, cfg);
      FAIL("expected BackendError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::BackendError);
    }
  }
  SUBCASE("solver that never writes a solution") {
    cfg.command_template = "true";
    CHECK_THROWS_AS(external_solve(inst, cfg), Error);
  }
  SUBCASE("watchdog kills a hung solver") {
    cfg.command_template = "sleep 30";
    cfg.limits.time_limit = 0.0;
    cfg.kill_grace = 0.2;
    try {
      external_solve(inst, cfg);
      FAIL("expected SolverTimeout");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SolverTimeout);
    }
  }
  SUBCASE("reported infeasibility is a status") {
    cfg.command_template = "printf 'status=Infeasible\\n' > {sol_path}";
    CHECK(external_solve(inst, cfg).status == SolveStatus::Infeasible);
  }
  SUBCASE("placeholders are substituted") {
    cfg.command_template = "test -s {lp_path} && printf 'status=TimeLimit\\n' > {sol_path} # {gap} {time_limit}";
    try {
      external_solve(inst, cfg);
      FAIL("expected SolverTimeout");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SolverTimeout);
    }
  }
}

TEST_CASE("CBC agrees with the embedded solver" * doctest::skip(locate_cbc().empty())) {
  ExternalSolverConfig cfg;
  cfg.command_template = kCbcCommandTemplate;
  cfg.solver_path = locate_cbc();
  cfg.adapter = SolutionAdapter::Cbc;
  cfg.limits.mip_gap = 0.0;
  std::mt19937_64 rng(5);
  int compared = 0;
  for (int rep = 0; rep < 8; ++rep) {
    const auto inst = rep == 0 ? oracle::two_unit_fixture() : oracle::random_tiny_instance(rng);
    const MilpInstance m = build_milp(inst.fleet, inst.theta, inst.demand);
    const MilpSolution a = bnb_solve(m, EmbeddedBackend::default_limits());
    const MilpSolution b = external_solve(m, cfg);
    CHECK(a.status == b.status);
    if (a.status == SolveStatus::Optimal && b.status == SolveStatus::Optimal) {
      ++compared;
      CHECK(std::abs(a.objective - b.objective) < 1e-6);
      const Schedule s = extract_schedule(inst.fleet, m, b.primal, b.objective);
      CHECK(validate_schedule(inst.fleet, inst.theta, inst.demand, s).empty());
    }
  }
  CHECK(compared >= 3);
}

TEST_CASE("CBC with a zero time limit on a large instance times out" * doctest::skip(locate_cbc().empty())) {
  const FleetConfig f = default_fleet();
  ThetaVector th;
  for (int i = 0; i < 9; ++i) th.costs.push_back(15.0 + 3.0 * i);
  DemandProfile d;
  for (int t = 0; t < 24; ++t) d.demand.push_back(900.0 + 300.0 * std::sin(6.283185307179586 * t / 24.0));
  ExternalSolverConfig cfg;
  cfg.command_template = kCbcCommandTemplate;
  cfg.solver_path = locate_cbc();
  cfg.adapter = SolutionAdapter::Cbc;
  cfg.limits.time_limit = 0.0;
  cfg.kill_grace = 1.0;
  try {
    external_solve(build_milp(f, th, d), cfg);
    FAIL("expected SolverTimeout");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SolverTimeout);
  }
}
