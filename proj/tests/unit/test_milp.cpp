#include "ucsbi/bnb.hpp"
#include "ucsbi/errors.hpp"
#include "ucsbi/lp_simplex.hpp"
#include "ucsbi/uc_milp.hpp"

#include "textbook_lp.hpp"
#include "uc_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace ucsbi;

namespace {

FleetConfig single_unit(int T) {
  FleetConfig f;
  f.horizon = T;
  UnitParams u;
  u.name = "only";
  u.gen_max = 100;
  u.ramp_up = u.ramp_down = u.startup_rate = u.shutdown_rate = 100;
  u.init_committed = true;
  u.init_output = 50;
  u.cost_is_theta = true;
  u.cost_segments = {{1.0, 0.0}};
  f.units = {u};
  return f;
}

}  // namespace

TEST_CASE("dense simplex solves small LPs") {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6  ->  min -(x+y); optimum at (1.6, 1.2).
  MilpInstance m;
  const int x = m.add_variable("x", 0, kInf, false);
  const int y = m.add_variable("y", 0, kInf, false);
  m.objective.add(x, -1);
  m.objective.add(y, -1);
  SparseRow r1, r2;
  r1.add(x, 1);
  r1.add(y, 2);
  r2.add(x, 3);
  r2.add(y, 1);
  m.add_constraint("a", r1, Relation::LessEqual, 4);
  m.add_constraint("b", r2, Relation::LessEqual, 6);
  LpResult res = solve_lp(m);
  REQUIRE(res.status == LpStatus::Optimal);
  CHECK(res.x[0] == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(res.x[1] == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(res.objective == doctest::Approx(-2.8).epsilon(1e-12));

  SUBCASE("infeasible") {
    SparseRow r3;
    r3.add(x, 1);
    m.add_constraint("c", r3, Relation::GreaterEqual, 5);
    CHECK(solve_lp(m).status == LpStatus::Infeasible);
  }
  SUBCASE("unbounded") {
    MilpInstance u;
    const int a = u.add_variable("a", 0, kInf, false);
    u.objective.add(a, -1);
    CHECK(solve_lp(u).status == LpStatus::Unbounded);
  }
  SUBCASE("free and negative-bounded columns") {
    MilpInstance f;
    const int a = f.add_variable("a", -kInf, kInf, false);
    const int b = f.add_variable("b", -5, -1, false);
    f.objective.add(a, 1);
    SparseRow r;
    r.add(a, 1);
    r.add(b, -2);
    f.add_constraint("r", r, Relation::GreaterEqual, 3);  // a >= 3 + 2b, b >= -5
    LpResult fr = solve_lp(f);
    REQUIRE(fr.status == LpStatus::Optimal);
    CHECK(fr.objective == doctest::Approx(-7.0));
  }
}

TEST_CASE("dense simplex agrees with the textbook reference on random LPs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int compared = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + rep % 5, m = 1 + rep % 4;
    MilpInstance inst;
    std::vector<double> c(n);
    std::vector<oracle::Row> rows;
    for (int j = 0; j < n; ++j) {
      inst.add_variable("x" + std::to_string(j), 0, 10, false);
      c[j] = U(rng);
      inst.objective.add(j, c[j]);
      std::vector<double> a(n, 0.0);
      a[j] = 1;
      rows.push_back({a, oracle::Rel::Le, 10});
    }
    for (int i = 0; i < m; ++i) {
      SparseRow r;
      std::vector<double> a(n);
      for (int j = 0; j < n; ++j) {
        a[j] = std::round(U(rng) * 4);
        if (a[j] != 0) r.add(j, a[j]);
      }
      const double b = std::round(U(rng) * 8);
      const Relation rel = i % 3 == 0 ? Relation::LessEqual : (i % 3 == 1 ? Relation::GreaterEqual : Relation::Equal);
      inst.add_constraint("r" + std::to_string(i), r, rel, b);
      rows.push_back({a, rel == Relation::LessEqual ? oracle::Rel::Le : rel == Relation::GreaterEqual ? oracle::Rel::Ge : oracle::Rel::Eq, b});
    }
    const LpResult mine = solve_lp(inst);
    const oracle::LpOutcome ref = oracle::textbook_lp(c, rows);
    CHECK((mine.status == LpStatus::Optimal) == ref.feasible);
    if (ref.feasible && mine.status == LpStatus::Optimal) {
      CHECK(std::abs(mine.objective - ref.objective) < 1e-7);
      ++compared;
    }
  }
  CHECK(compared > 50);
}

TEST_CASE("branch and bound with all binaries fixed equals the LP optimum") {
  MilpInstance m;
  const int x = m.add_variable("x", 0, 10, false);
  const int b = m.add_variable("b", 1, 1, true);
  m.objective.add(x, 2);
  m.objective.add(b, 5);
  SparseRow r;
  r.add(x, 1);
  r.add(b, 3);
  m.add_constraint("r", r, Relation::GreaterEqual, 7.5);
  const MilpSolution s = bnb_solve(m);
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.objective == doctest::Approx(solve_lp(m).objective));
  CHECK(s.objective == doctest::Approx(14.0));
}

TEST_CASE("branch and bound solves a knapsack exactly") {
  // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5 -> a = 1, c = 1 (8) or a, b (9)? 2+3 = 5 -> 9.
  MilpInstance m;
  const double val[] = {5, 4, 3}, w[] = {2, 3, 1};
  SparseRow r;
  for (int i = 0; i < 3; ++i) {
    m.add_variable("b" + std::to_string(i), 0, 1, true);
    m.objective.add(i, -val[i]);
    r.add(i, w[i]);
  }
  m.add_constraint("cap", r, Relation::LessEqual, 5);
  const MilpSolution s = bnb_solve(m);
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.objective == doctest::Approx(-9.0));
}

TEST_CASE("branch and bound limits") {
  MilpInstance m;
  for (int i = 0; i < 5; ++i) m.add_variable("b" + std::to_string(i), 0, 1, true);
  SolveLimits lim;
  lim.max_binaries = 4;
  try {
    bnb_solve(m, lim);
    FAIL("expected TooManyBinaries");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooManyBinaries);
  }
}

TEST_CASE("variable counts of the UC program") {
  const FleetConfig f = single_unit(2);
  const MilpInstance inst = build_milp(f, ThetaVector{{10.0}}, DemandProfile{{50.0, 50.0}});
  CHECK(inst.column_count() == 12);
  CHECK(inst.integer_count() == 6);
  CHECK(inst.check().empty());

  const FleetConfig d = default_fleet();
  const MilpInstance big = build_milp(d, ThetaVector{std::vector<double>(9, 25.0)}, DemandProfile{std::vector<double>(24, 900.0)});
  CHECK(big.integer_count() == 720);
  // Independent count over the semantic keys.
  std::size_t binaries = 0;
  for (std::size_t j = 0; j < 10; ++j)
    for (std::size_t t = 0; t < 24; ++t)
      for (const char* fam : {"v", "y", "z"})
        if (big.variable_index.count(uc_key(fam, j, t)) && big.variables[static_cast<std::size_t>(big.column(uc_key(fam, j, t)))].integer)
          ++binaries;
  CHECK(binaries == 720);
  std::size_t balance = 0;
  for (const auto& c : big.constraints)
    if (c.name.rfind("demand_", 0) == 0) {
      ++balance;
      CHECK(c.relation == Relation::Equal);
      CHECK(c.row.size() == 10);
    }
  CHECK(balance == 24);
}

TEST_CASE("build_milp rejects mismatched inputs") {
  const FleetConfig f = single_unit(2);
  CHECK_THROWS_AS(build_milp(f, ThetaVector{{10.0, 3.0}}, DemandProfile{{50.0, 50.0}}), Error);
  CHECK_THROWS_AS(build_milp(f, ThetaVector{{10.0}}, DemandProfile{{50.0}}), Error);
  FleetConfig bad = f;
  bad.units[0].gen_min = 200;
  CHECK_THROWS_AS(build_milp(bad, ThetaVector{{10.0}}, DemandProfile{{50.0, 50.0}}), Error);
}

TEST_CASE("single unit dispatch is forced by the balance") {
  const FleetConfig f = single_unit(2);
  const EmbeddedBackend be;
  const Schedule s = solve_uc(f, ThetaVector{{10.0}}, DemandProfile{{50.0, 50.0}}, be);
  CHECK(s.g(0, 0) == doctest::Approx(50.0));
  CHECK(s.g(0, 1) == doctest::Approx(50.0));
  CHECK(s.objective_value == doctest::Approx(1000.0));
  CHECK(validate_schedule(f, ThetaVector{{10.0}}, DemandProfile{{50.0, 50.0}}, s).empty());
}

TEST_CASE("the cheaper unit carries the load") {
  FleetConfig f = single_unit(3);
  UnitParams b = f.units[0];
  b.name = "dear";
  b.init_committed = false;
  b.init_output = 0;
  f.units.push_back(b);
  const ThetaVector th{{10.0, 30.0}};
  const DemandProfile d{{40.0, 60.0, 80.0}};
  const Schedule s = solve_uc(f, th, d, EmbeddedBackend{});
  for (int t = 0; t < 3; ++t) {
    CHECK(s.v(1, t) == 0);
    CHECK(s.g(1, t) == doctest::Approx(0.0));
  }
  CHECK(s.objective_value == doctest::Approx(10.0 * 180.0));
}

TEST_CASE("two-unit fixture matches the exhaustive oracle") {
  const auto inst = oracle::two_unit_fixture();
  const auto ref = oracle::uc_oracle(inst.fleet, inst.theta, inst.demand);
  REQUIRE(ref.has_value());
  const Schedule s = solve_uc(inst.fleet, inst.theta, inst.demand, EmbeddedBackend{});
  CHECK(std::abs(s.objective_value - ref->objective) < 1e-6);
  CHECK(validate_schedule(inst.fleet, inst.theta, inst.demand, s).empty());
}

TEST_CASE("random tiny instances agree with the oracle") {
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const auto inst = oracle::random_tiny_instance(rng);
    const auto ref = oracle::uc_oracle(inst.fleet, inst.theta, inst.demand);
    const MilpSolution sol = bnb_solve(build_milp(inst.fleet, inst.theta, inst.demand), EmbeddedBackend::default_limits());
    CHECK((sol.status == SolveStatus::Optimal) == ref.has_value());
    if (ref && sol.status == SolveStatus::Optimal) {
      ++feasible;
      CHECK(std::abs(sol.objective - ref->objective) < 1e-6);
    }
  }
  CHECK(feasible > 10);
}

TEST_CASE("infeasible instance is reported as a status") {
  FleetConfig f = single_unit(2);
  const MilpInstance inst = build_milp(f, ThetaVector{{10.0}}, DemandProfile{{50.0, 500.0}});
  CHECK(bnb_solve(inst).status == SolveStatus::Infeasible);
  try {
    solve_uc(f, ThetaVector{{10.0}}, DemandProfile{{50.0, 500.0}}, EmbeddedBackend{});
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Infeasible);
  }
}

TEST_CASE("validate_schedule flags direct breaches") {
  const auto inst = oracle::two_unit_fixture();
  const Schedule good = solve_uc(inst.fleet, inst.theta, inst.demand, EmbeddedBackend{});

  Schedule s = good;
  s.v(0, 0) = 1;
  s.g(0, 0) = inst.fleet.units[0].gen_max + 1.0;
  auto v = validate_schedule(inst.fleet, inst.theta, inst.demand, s);
  bool gen = false;
  for (const auto& x : v) gen |= x.family == ConstraintFamily::GenerationLimits && x.unit == 0 && x.step == 0;
  CHECK(gen);

  s = good;
  s.v(0, 0) = 1;
  s.v(0, 1) = 1;
  s.y(0, 1) = 1;
  s.z(0, 1) = 0;
  v = validate_schedule(inst.fleet, inst.theta, inst.demand, s);
  bool logic = false;
  for (const auto& x : v) logic |= x.family == ConstraintFamily::Logic && x.unit == 0 && x.step == 1;
  CHECK(logic);

  s = good;
  s.g(1, 2) += 5.0;
  v = validate_schedule(inst.fleet, inst.theta, inst.demand, s);
  bool balance = false;
  for (const auto& x : v) balance |= x.family == ConstraintFamily::DemandBalance && x.step == 2;
  CHECK(balance);

  Schedule wrong = Schedule::zeros(1, 3);
  CHECK_THROWS_AS(validate_schedule(inst.fleet, inst.theta, inst.demand, wrong), Error);
}

TEST_CASE("raising every cost never lowers the optimum") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 10; ++rep) {
    const auto inst = oracle::random_tiny_instance(rng);
    const MilpSolution a = bnb_solve(build_milp(inst.fleet, inst.theta, inst.demand), EmbeddedBackend::default_limits());
    if (a.status != SolveStatus::Optimal) continue;
    ThetaVector up = inst.theta;
    for (double& c : up.costs) c += 3.0;
    const MilpSolution b = bnb_solve(build_milp(inst.fleet, up, inst.demand), EmbeddedBackend::default_limits());
    REQUIRE(b.status == SolveStatus::Optimal);
    CHECK(b.objective >= a.objective - 1e-9);
  }
}

TEST_CASE("embedded solves are deterministic") {
  const auto inst = oracle::two_unit_fixture();
  const Schedule a = solve_uc(inst.fleet, inst.theta, inst.demand, EmbeddedBackend{});
  const Schedule b = solve_uc(inst.fleet, inst.theta, inst.demand, EmbeddedBackend{});
  CHECK(a.objective_value == b.objective_value);
  CHECK(a.g == b.g);
  CHECK(a.v == b.v);
}
