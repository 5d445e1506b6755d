#include "ucsbi/config.hpp"

#include "ucsbi/errors.hpp"
#include "ucsbi/embedded_configs.hpp"
#include "ucsbi/hash.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace ucsbi {

using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw Error(ErrorKind::InvalidConfig, std::string("section '") + key + "' must be an object");
  return j.at(key);
}

std::uint64_t read_seed(const json& j, const char* where) {
  if (!j.contains("seed")) throw Error(ErrorKind::InvalidConfig, std::string(where) + ": seed is required");
  const json& s = j.at("seed");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
    throw Error(ErrorKind::InvalidConfig, std::string(where) + ": seed must be a non-negative integer");
  return s.get<std::uint64_t>();
}

json backend_json(const BackendConfig& b) {
  json j = {{"kind", b.kind}, {"mip_gap", b.mip_gap}, {"time_limit", b.time_limit},
            {"max_binaries", b.max_binaries}, {"kill_grace", b.kill_grace}};
  if (b.kind == "external") {
    j["adapter"] = b.adapter;
    j["command"] = b.command;
    if (!b.solver.empty()) j["solver"] = b.solver;
  }
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  const int version = j.value("schema_version", -1);
  if (version != kRunConfigSchemaVersion)
    throw Error(ErrorKind::SchemaMismatch, "unsupported config schema_version " + std::to_string(version));

  RunConfig c;
  try {
    c.schema_version = version;
    read_opt(j, "name", c.name);
    c.seed = read_seed(j, "config");
    if (!j.contains("fleet") || !j.contains("theta_prior") || !j.contains("demand_prior"))
      throw Error(ErrorKind::InvalidConfig, "config needs fleet, theta_prior and demand_prior sections");
    c.fleet = j.at("fleet").get<FleetConfig>();
    c.theta_prior = j.at("theta_prior").get<ThetaPrior>();
    c.demand_prior = j.at("demand_prior").get<DemandPriorConfig>();

    const json& b = section(j, "backend");
    read_opt(b, "kind", c.backend.kind);
    read_opt(b, "adapter", c.backend.adapter);
    read_opt(b, "command", c.backend.command);
    read_opt(b, "solver", c.backend.solver);
    read_opt(b, "mip_gap", c.backend.mip_gap);
    read_opt(b, "time_limit", c.backend.time_limit);
    read_opt(b, "max_binaries", c.backend.max_binaries);
    read_opt(b, "kill_grace", c.backend.kill_grace);

    const json& t = section(j, "train");
    if (t.contains("flow")) c.train.flow = flow_kind_from_string(t.at("flow").get<std::string>());
    read_opt(t, "epochs", c.train.epochs);
    read_opt(t, "batch_size", c.train.batch_size);
    read_opt(t, "learning_rate", c.train.learning_rate);
    read_opt(t, "transforms", c.train.transforms);
    read_opt(t, "hidden_layers", c.train.hidden_layers);
    read_opt(t, "hidden_units", c.train.hidden_units);
    read_opt(t, "bins", c.train.bins);
    read_opt(t, "workers", c.train.workers);
    read_opt(t, "grad_clip", c.train.grad_clip);
    read_opt(t, "context_clip", c.train.context_clip);
    c.train.seed = read_seed(t, "train");

    const json& d = section(j, "diagnostics");
    read_opt(d, "coverage_samples", c.diagnostics.coverage_samples);
    read_opt(d, "levels", c.diagnostics.levels);
    read_opt(d, "ppc_samples", c.diagnostics.ppc_samples);
    read_opt(d, "corner_bins", c.diagnostics.corner_bins);
    read_opt(d, "max_rejection_rate", c.diagnostics.max_rejection_rate);

    const json& s = section(j, "dataset");
    read_opt(s, "train", c.dataset.train);
    read_opt(s, "val", c.dataset.val);
    read_opt(s, "test", c.dataset.test);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }

  const auto problems = validate_run_config(c);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorKind::InvalidConfig, msg);
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

RunConfig default_run_config() { return parse_run_config(kDefaultConfigJson); }

std::string run_config_to_string(const RunConfig& c) {
  json j = {
      {"schema_version", c.schema_version},
      {"name", c.name},
      {"seed", c.seed},
      {"fleet", c.fleet},
      {"theta_prior", c.theta_prior},
      {"demand_prior", c.demand_prior},
      {"backend", backend_json(c.backend)},
      {"train",
       {{"flow", to_string(c.train.flow)},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"transforms", c.train.transforms},
        {"hidden_layers", c.train.hidden_layers},
        {"hidden_units", c.train.hidden_units},
        {"bins", c.train.bins},
        {"seed", c.train.seed},
        {"workers", c.train.workers},
        {"grad_clip", c.train.grad_clip},
        {"context_clip", c.train.context_clip}}},
      {"diagnostics",
       {{"coverage_samples", c.diagnostics.coverage_samples},
        {"levels", c.diagnostics.levels},
        {"ppc_samples", c.diagnostics.ppc_samples},
        {"corner_bins", c.diagnostics.corner_bins},
        {"max_rejection_rate", c.diagnostics.max_rejection_rate}}},
      {"dataset", {{"train", c.dataset.train}, {"val", c.dataset.val}, {"test", c.dataset.test}}},
  };
  return j.dump(2) + "\n";
}

std::vector<std::string> validate_run_config(const RunConfig& c) {
  std::vector<std::string> out = validate_fleet(c.fleet);
  for (auto& s : validate_prior(c.theta_prior)) out.push_back(std::move(s));
  for (auto& s : validate_demand_prior(c.demand_prior)) out.push_back(std::move(s));
  if (c.theta_prior.dim() != c.fleet.theta_dim())
    out.push_back("theta prior has " + std::to_string(c.theta_prior.dim()) + " entries, fleet infers " +
                  std::to_string(c.fleet.theta_dim()));

  const auto& b = c.backend;
  if (b.kind != "embedded" && b.kind != "external") out.push_back("backend.kind must be embedded or external");
  if (b.kind == "external") {
    if (b.command.empty()) out.emplace_back("backend.command is required for the external backend");
    if (b.adapter != "native" && b.adapter != "cbc") out.emplace_back("backend.adapter must be native or cbc");
  }
  if (!(b.mip_gap >= 0.0)) out.emplace_back("backend.mip_gap must be >= 0");
  if (!(b.time_limit >= 0.0)) out.emplace_back("backend.time_limit must be >= 0");
  if (!(b.kill_grace >= 0.0)) out.emplace_back("backend.kill_grace must be >= 0");

  const auto& t = c.train;
  if (t.epochs < 1) out.emplace_back("train.epochs must be >= 1");
  if (t.batch_size < 1) out.emplace_back("train.batch_size must be >= 1");
  if (!(t.learning_rate > 0.0)) out.emplace_back("train.learning_rate must be > 0");
  if (t.transforms < 1 || t.hidden_layers < 1 || t.hidden_units < 1)
    out.emplace_back("train.transforms, hidden_layers and hidden_units must be >= 1");
  if (t.bins < 2) out.emplace_back("train.bins must be >= 2");
  if (t.workers < 0) out.emplace_back("train.workers must be >= 0");
  if (!(t.grad_clip >= 0.0)) out.emplace_back("train.grad_clip must be >= 0");
  if (!(t.context_clip >= 0.0)) out.emplace_back("train.context_clip must be >= 0");

  const auto& d = c.diagnostics;
  if (d.coverage_samples < 1 || d.ppc_samples < 1) out.emplace_back("diagnostics sample counts must be >= 1");
  if (d.levels < 1) out.emplace_back("diagnostics.levels must be >= 1");
  if (d.corner_bins < 2) out.emplace_back("diagnostics.corner_bins must be >= 2");
  if (!(d.max_rejection_rate > 0.0 && d.max_rejection_rate <= 1.0))
    out.emplace_back("diagnostics.max_rejection_rate must be in (0, 1]");
  return out;
}

std::string config_hash(const RunConfig& c) {
  // nlohmann objects are key-sorted, so the dump is canonical.
  const std::string canon =
      json{{"fleet", c.fleet}, {"theta_prior", c.theta_prior}, {"demand_prior", c.demand_prior}}.dump();
  return sha256_hex(canon).substr(0, 16);
}

std::unique_ptr<MilpBackend> make_backend(const BackendConfig& b) {
  SolveLimits limits;
  limits.mip_gap = b.mip_gap;
  limits.time_limit = b.time_limit;
  limits.max_binaries = b.max_binaries;
  if (b.kind == "embedded") {
    SolveLimits l = EmbeddedBackend::default_limits();
    l.mip_gap = std::min(l.mip_gap, b.mip_gap);
    l.time_limit = b.time_limit;
    l.max_binaries = b.max_binaries;
    return std::make_unique<EmbeddedBackend>(l);
  }
  if (b.kind != "external") throw Error(ErrorKind::InvalidConfig, "unknown backend kind '" + b.kind + "'");
  ExternalSolverConfig e;
  e.command_template = b.command;
  e.solver_path = b.solver.empty() ? locate_cbc() : b.solver;
  e.adapter = adapter_from_string(b.adapter);
  e.limits = limits;
  e.kill_grace = b.kill_grace;
  return std::make_unique<ExternalBackend>(e);
}

}  // namespace ucsbi
