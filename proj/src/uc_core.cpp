#include "ucsbi/uc_core.hpp"

#include "ucsbi/embedded_configs.hpp"
#include "ucsbi/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace ucsbi {

using nlohmann::json;

std::size_t FleetConfig::theta_dim() const {
  std::size_t n = 0;
  for (const auto& u : units) n += u.cost_is_theta ? 1 : 0;
  return n;
}

std::vector<std::size_t> FleetConfig::theta_units() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < units.size(); ++j)
    if (units[j].cost_is_theta) out.push_back(j);
  return out;
}

Schedule Schedule::zeros(std::size_t units, std::size_t horizon) {
  Schedule s;
  const auto r = static_cast<Eigen::Index>(units);
  const auto c = static_cast<Eigen::Index>(horizon);
  s.g = Eigen::MatrixXd::Zero(r, c);
  s.g_bar = Eigen::MatrixXd::Zero(r, c);
  s.v = BinaryMatrix::Zero(r, c);
  s.y = BinaryMatrix::Zero(r, c);
  s.z = BinaryMatrix::Zero(r, c);
  return s;
}

FleetConfig default_fleet() {
  return json::parse(kDefaultConfigJson).at("fleet").get<FleetConfig>();
}

std::vector<std::string> validate_fleet(const FleetConfig& cfg) {
  std::vector<std::string> out;
  auto fail = [&](std::size_t j, const std::string& what) {
    out.push_back("unit " + std::to_string(j) + ": " + what);
  };
  if (cfg.units.empty()) out.emplace_back("fleet has no units");
  if (cfg.horizon < 1) out.emplace_back("horizon must be >= 1");
  if (!(cfg.reserve_fraction >= 0.0) || !std::isfinite(cfg.reserve_fraction))
    out.emplace_back("reserve_fraction must be finite and >= 0");

  std::size_t dsm_count = 0;
  for (std::size_t j = 0; j < cfg.units.size(); ++j) {
    const UnitParams& u = cfg.units[j];
    if (u.is_dsm) ++dsm_count;
    const double numbers[] = {u.startup_cost, u.ramp_up,  u.ramp_down, u.startup_rate,
                              u.shutdown_rate, u.gen_max, u.gen_min,   u.init_output};
    for (double x : numbers)
      if (!std::isfinite(x)) {
        fail(j, "non-finite parameter");
        break;
      }
    if (u.gen_min < 0.0) fail(j, "gen_min < 0");
    if (u.gen_min > u.gen_max) fail(j, "gen_min > gen_max");
    if (u.ramp_up < 0.0 || u.ramp_down < 0.0) fail(j, "negative ramp rate");
    if (u.startup_rate < 0.0 || u.shutdown_rate < 0.0) fail(j, "negative startup/shutdown rate");
    if (u.min_up < 0 || u.min_down < 0) fail(j, "negative minimum up/down time");
    if (u.init_on_steps < 0 || u.init_off_steps < 0) fail(j, "negative initial on/off steps");
    if (u.init_on_steps > 0 && !u.init_committed) fail(j, "init_on_steps > 0 requires init_committed");
    if (u.init_off_steps > 0 && u.init_committed) fail(j, "init_off_steps > 0 requires !init_committed");
    if (u.init_committed) {
      if (u.init_output < u.gen_min || u.init_output > u.gen_max)
        fail(j, "committed init_output outside [gen_min, gen_max]");
    } else if (u.init_output != 0.0) {
      fail(j, "uncommitted unit must have init_output = 0");
    }
    if (u.cost_segments.empty()) fail(j, "no cost segments");
    if (u.cost_is_theta &&
        (u.cost_segments.size() != 1 || (!u.cost_segments.empty() && u.cost_segments[0].intercept != 0.0)))
      fail(j, "theta-cost unit needs exactly one segment with zero intercept");
  }
  if (dsm_count > 1) out.emplace_back("more than one unit flagged is_dsm");
  return out;
}

void require_valid_fleet(const FleetConfig& cfg) {
  const auto violations = validate_fleet(cfg);
  if (violations.empty()) return;
  std::string msg;
  for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v;
  throw Error(ErrorKind::InvalidFleet, msg);
}

void require_valid_theta(const FleetConfig& cfg, const ThetaVector& theta) {
  if (theta.size() != cfg.theta_dim())
    throw Error(ErrorKind::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                  " entries, fleet expects " +
                                                  std::to_string(cfg.theta_dim()));
  for (double c : theta.costs)
    if (!std::isfinite(c) || c <= 0.0)
      throw Error(ErrorKind::NonFiniteInput, "theta entries must be finite and > 0");
}

void require_valid_demand(const FleetConfig& cfg, const DemandProfile& demand) {
  if (demand.size() != static_cast<std::size_t>(cfg.horizon))
    throw Error(ErrorKind::DimensionMismatch, "demand has " + std::to_string(demand.size()) +
                                                  " steps, horizon is " + std::to_string(cfg.horizon));
  for (double d : demand.demand)
    if (!std::isfinite(d) || d < 0.0)
      throw Error(ErrorKind::NonFiniteInput, "demand entries must be finite and >= 0");
}

void to_json(json& j, const CostSegment& s) { j = json{{"slope", s.slope}, {"intercept", s.intercept}}; }

void from_json(const json& j, CostSegment& s) {
  j.at("slope").get_to(s.slope);
  j.at("intercept").get_to(s.intercept);
}

void to_json(json& j, const UnitParams& u) {
  j = json{{"name", u.name},
           {"startup_cost", u.startup_cost},
           {"ramp_up", u.ramp_up},
           {"ramp_down", u.ramp_down},
           {"startup_rate", u.startup_rate},
           {"shutdown_rate", u.shutdown_rate},
           {"min_up", u.min_up},
           {"min_down", u.min_down},
           {"gen_max", u.gen_max},
           {"gen_min", u.gen_min},
           {"init_on_steps", u.init_on_steps},
           {"init_off_steps", u.init_off_steps},
           {"init_committed", u.init_committed},
           {"init_output", u.init_output},
           {"cost_segments", u.cost_segments},
           {"cost_is_theta", u.cost_is_theta},
           {"is_dsm", u.is_dsm}};
}

void from_json(const json& j, UnitParams& u) {
  u.name = j.value("name", std::string{});
  j.at("startup_cost").get_to(u.startup_cost);
  j.at("ramp_up").get_to(u.ramp_up);
  j.at("ramp_down").get_to(u.ramp_down);
  j.at("startup_rate").get_to(u.startup_rate);
  j.at("shutdown_rate").get_to(u.shutdown_rate);
  j.at("min_up").get_to(u.min_up);
  j.at("min_down").get_to(u.min_down);
  j.at("gen_max").get_to(u.gen_max);
  j.at("gen_min").get_to(u.gen_min);
  j.at("init_on_steps").get_to(u.init_on_steps);
  j.at("init_off_steps").get_to(u.init_off_steps);
  j.at("init_committed").get_to(u.init_committed);
  j.at("init_output").get_to(u.init_output);
  j.at("cost_segments").get_to(u.cost_segments);
  u.cost_is_theta = j.value("cost_is_theta", false);
  u.is_dsm = j.value("is_dsm", false);
}

void to_json(json& j, const FleetConfig& f) {
  j = json{{"horizon", f.horizon}, {"reserve_fraction", f.reserve_fraction}, {"units", f.units}};
}

void from_json(const json& j, FleetConfig& f) {
  j.at("horizon").get_to(f.horizon);
  f.reserve_fraction = j.value("reserve_fraction", 0.0);
  j.at("units").get_to(f.units);
}

std::string fleet_to_string(const FleetConfig& fleet) {
  json j = fleet;
  j["schema_version"] = kFleetSchemaVersion;
  return j.dump(2);
}

FleetConfig fleet_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("fleet JSON: ") + e.what());
  }
  // A full run configuration carries the fleet in its "fleet" section.
  const json& doc = j.contains("fleet") ? j.at("fleet") : j;
  const int version = j.value("schema_version", -1);
  if (version != kFleetSchemaVersion)
    throw Error(ErrorKind::SchemaMismatch, "unsupported fleet schema_version " + std::to_string(version));
  try {
    return doc.get<FleetConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("fleet JSON: ") + e.what());
  }
}

void save_fleet(const std::string& path, const FleetConfig& fleet) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << fleet_to_string(fleet) << '\n';
}

FleetConfig load_fleet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return fleet_from_string(ss.str());
}

}  // namespace ucsbi
