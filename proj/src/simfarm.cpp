#include "ucsbi/simfarm.hpp"

#include "ucsbi/errors.hpp"
#include "ucsbi/hash.hpp"

#include <nlohmann/json.hpp>
#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ucsbi {

using nlohmann::json;
namespace fs = std::filesystem;

std::string manifest_path(const std::string& records_path) { return records_path + ".manifest.json"; }

namespace {

json manifest_to_json(const DatasetManifest& m) {
  json skips = json::array();
  for (const auto& s : m.skips) skips.push_back({{"i", s.index}, {"attempt", s.attempt}, {"error", s.error}});
  return {{"schema_version", m.schema_version},
          {"config_hash", m.config_hash},
          {"count", m.count},
          {"seed", m.seed},
          {"backend", m.backend},
          {"units", m.units},
          {"horizon", m.horizon},
          {"theta_dim", m.theta_dim},
          {"records_sha256", m.records_sha256},
          {"generator", "ucsbi simulate"},
          {"skips", skips}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kDatasetSchemaVersion)
    throw Error(ErrorKind::SchemaMismatch, "unsupported dataset schema_version " + std::to_string(m.schema_version));
  m.config_hash = j.at("config_hash").get<std::string>();
  m.count = j.at("count").get<std::uint64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.backend = j.at("backend").get<std::string>();
  m.units = j.at("units").get<std::size_t>();
  m.horizon = j.at("horizon").get<int>();
  m.theta_dim = j.at("theta_dim").get<std::size_t>();
  m.records_sha256 = j.at("records_sha256").get<std::string>();
  for (const auto& s : j.at("skips"))
    m.skips.push_back({s.at("i").get<std::uint64_t>(), s.at("attempt").get<std::uint32_t>(),
                       s.at("error").get<std::string>()});
  return m;
}

// Writes `text` to a sibling temporary file and renames it over `path`.
void write_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp + ": " + ec.message());
}

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json matrix_rows(const BinaryMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class M>
M rows_to_matrix(const json& rows) {
  const auto R = static_cast<Eigen::Index>(rows.size());
  const auto C = R ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
  M m(R, C);
  for (Eigen::Index r = 0; r < R; ++r) {
    const json& row = rows.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != C) throw Error(ErrorKind::CorruptFile, "ragged matrix in record");
    for (Eigen::Index c = 0; c < C; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<typename M::Scalar>();
  }
  return m;
}

// Outcome of producing one index: the record plus any failed draws before it.
struct Produced {
  SimRecord record;
  std::vector<SkipEntry> skips;
  std::size_t backend_errors = 0;
  bool exhausted = false;
  std::exception_ptr fatal;
};

Produced produce(const RunConfig& cfg, std::uint64_t seed, std::uint64_t index, const MilpBackend& backend,
                 const GenerateOptions& opts) {
  Produced p;
  try {
    for (std::uint32_t a = 0; a < opts.max_attempts; ++a) {
      try {
        p.record = simulate_record(cfg, seed, index, a, backend, opts.validate_tol);
        return p;
      } catch (const Error& e) {
        switch (e.kind()) {
          case ErrorKind::SolverTimeout:
          case ErrorKind::Infeasible:
          case ErrorKind::NodeLimitExceeded:
          case ErrorKind::LpNumericalFailure: break;
          case ErrorKind::BackendError: ++p.backend_errors; break;
          default: throw;
        }
        p.skips.push_back({index, a, std::string(to_string(e.kind())) + ": " + e.what()});
      }
    }
    p.exhausted = true;
  } catch (...) {
    p.fatal = std::current_exception();
  }
  return p;
}

}  // namespace

SimRecord simulate_record(const RunConfig& cfg, std::uint64_t seed, std::uint64_t index, std::uint32_t attempt,
                          const MilpBackend& backend, double validate_tol) {
  Rng rng = substream(seed, {index, attempt});
  SimRecord r;
  r.index = index;
  r.attempt = attempt;
  r.theta = sample_theta(cfg.theta_prior, rng);
  r.demand = sample_demand(cfg.demand_prior, cfg.fleet.horizon, rng);
  const Schedule s = solve_uc(cfg.fleet, r.theta, r.demand, backend);
  const auto bad = validate_schedule(cfg.fleet, r.theta, r.demand, s, validate_tol);
  if (!bad.empty())
    throw Error(ErrorKind::BackendError, "solver schedule violates " + bad.front().describe() + " (" +
                                             std::to_string(bad.size()) + " violations)");
  r.g = s.g;
  r.v = s.v;
  r.objective = s.objective_value;
  return r;
}

std::string record_to_json_line(const SimRecord& r) {
  const json j = {{"i", r.index},          {"attempt", r.attempt},   {"theta", r.theta.costs},
                  {"demand", r.demand.demand}, {"g", matrix_rows(r.g)}, {"v", matrix_rows(r.v)},
                  {"objective", r.objective}};
  return j.dump();
}

SimRecord record_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    SimRecord r;
    r.index = j.at("i").get<std::uint64_t>();
    r.attempt = j.at("attempt").get<std::uint32_t>();
    r.theta.costs = j.at("theta").get<std::vector<double>>();
    r.demand.demand = j.at("demand").get<std::vector<double>>();
    r.g = rows_to_matrix<Eigen::MatrixXd>(j.at("g"));
    r.v = rows_to_matrix<BinaryMatrix>(j.at("v"));
    r.objective = j.at("objective").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("bad record: ") + e.what());
  }
}

DatasetManifest generate_dataset(const RunConfig& cfg, std::uint64_t n, std::uint64_t seed,
                                 const MilpBackend& backend, const std::string& path, const GenerateOptions& opts) {
  DatasetManifest m;
  m.config_hash = config_hash(cfg);
  m.seed = seed;
  m.backend = backend.name();
  m.units = cfg.fleet.unit_count();
  m.horizon = cfg.fleet.horizon;
  m.theta_dim = cfg.fleet.theta_dim();

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
  auto abort = [&](ErrorKind kind, const std::string& msg) {
    out.close();
    std::error_code ec;
    fs::remove(tmp, ec);
    throw Error(kind, msg);
  };

  const int threads = opts.workers > 0 ? opts.workers : omp_get_max_threads();
  const bool serial = threads == 1;
  const std::uint64_t chunk = serial ? 1 : static_cast<std::uint64_t>(16 * threads);
  Sha256 sha;
  std::size_t solves = 0, backend_errors = 0;
  std::vector<Produced> batch;

  for (std::uint64_t start = 0; start < n; start += chunk) {
    const auto len = static_cast<std::int64_t>(std::min<std::uint64_t>(chunk, n - start));
    batch.assign(static_cast<std::size_t>(len), Produced{});
    if (serial) {
      for (std::int64_t k = 0; k < len; ++k)
        batch[static_cast<std::size_t>(k)] = produce(cfg, seed, start + static_cast<std::uint64_t>(k), backend, opts);
    } else {
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
      for (std::int64_t k = 0; k < len; ++k)
        batch[static_cast<std::size_t>(k)] = produce(cfg, seed, start + static_cast<std::uint64_t>(k), backend, opts);
    }
    // Single writer, index order.
    for (auto& p : batch) {
      if (p.fatal) {
        try {
          std::rethrow_exception(p.fatal);
        } catch (const Error& e) {
          abort(e.kind(), e.what());
        } catch (const std::exception& e) {
          abort(ErrorKind::BackendError, e.what());
        }
      }
      solves += p.skips.size() + (p.exhausted ? 0 : 1);
      backend_errors += p.backend_errors;
      for (auto& s : p.skips) m.skips.push_back(std::move(s));
      if (solves >= opts.min_solves_for_rate &&
          static_cast<double>(backend_errors) > opts.max_backend_error_rate * static_cast<double>(solves))
        abort(ErrorKind::BackendError, "backend error rate " + std::to_string(backend_errors) + "/" +
                                           std::to_string(solves) + " exceeds threshold; last: " +
                                           (m.skips.empty() ? std::string() : m.skips.back().error));
      if (p.exhausted)
        abort(ErrorKind::BackendError, "no valid draw for index " + std::to_string(p.record.index) + " after " +
                                           std::to_string(opts.max_attempts) + " attempts; last: " +
                                           m.skips.back().error);
      const std::string line = record_to_json_line(p.record) + "\n";
      sha.update(line);
      out << line;
      ++m.count;
    }
  }
  out.flush();
  if (!out) abort(ErrorKind::Io, "write to " + tmp + " failed");
  out.close();
  m.records_sha256 = sha.hex();

  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp + ": " + ec.message());
  write_atomic(manifest_path(path), manifest_to_json(m).dump(2) + "\n");
  return m;
}

void write_dataset(const std::string& path, const std::vector<SimRecord>& records, DatasetManifest manifest) {
  std::string text;
  for (const auto& r : records) text += record_to_json_line(r) + "\n";
  manifest.count = records.size();
  manifest.records_sha256 = sha256_hex(text);
  write_atomic(path, text);
  write_atomic(manifest_path(path), manifest_to_json(manifest).dump(2) + "\n");
}

Dataset read_dataset(const std::string& path, const std::optional<std::string>& expected_hash) {
  Dataset d;
  {
    std::ifstream in(manifest_path(path));
    if (!in) throw Error(ErrorKind::Io, "cannot open " + manifest_path(path));
    try {
      d.manifest = manifest_from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::CorruptFile, "bad manifest " + manifest_path(path) + ": " + e.what());
    }
  }
  if (expected_hash && *expected_hash != d.manifest.config_hash)
    throw Error(ErrorKind::ConfigHashMismatch, path + " was generated for config " + d.manifest.config_hash +
                                                   ", expected " + *expected_hash);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (sha256_hex(text) != d.manifest.records_sha256)
    throw Error(ErrorKind::CorruptFile, path + " does not match its manifest checksum");
  if (!text.empty() && text.back() != '\n') throw Error(ErrorKind::CorruptFile, path + " ends mid-record");

  const auto J = static_cast<Eigen::Index>(d.manifest.units);
  const auto T = static_cast<Eigen::Index>(d.manifest.horizon);
  std::size_t begin = 0;
  while (begin < text.size()) {
    const std::size_t end = text.find('\n', begin);
    SimRecord r = record_from_json_line(text.substr(begin, end - begin));
    begin = end + 1;
    if (r.index != d.records.size())
      throw Error(ErrorKind::CorruptFile, "record " + std::to_string(d.records.size()) + " has index " +
                                              std::to_string(r.index));
    if (r.theta.size() != d.manifest.theta_dim || r.demand.size() != static_cast<std::size_t>(T) ||
        r.g.rows() != J || r.g.cols() != T || r.v.rows() != J || r.v.cols() != T)
      throw Error(ErrorKind::CorruptFile, "record " + std::to_string(r.index) + " has wrong dimensions");
    d.records.push_back(std::move(r));
  }
  if (d.records.size() != d.manifest.count)
    throw Error(ErrorKind::CorruptFile, path + " holds " + std::to_string(d.records.size()) + " records, manifest says " +
                                            std::to_string(d.manifest.count));
  return d;
}

Observation observation_from_record(const SimRecord& r, const std::string& config_hash) {
  return Observation{config_hash, r.theta.costs, r.demand, r.g};
}

void write_observation(const std::string& path, const Observation& o) {
  const json j = {{"schema_version", kDatasetSchemaVersion},
                  {"config_hash", o.config_hash},
                  {"theta", o.theta},
                  {"demand", o.demand.demand},
                  {"g", matrix_rows(o.g)}};
  write_atomic(path, j.dump(2) + "\n");
}

Observation read_observation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  Observation o;
  try {
    const json j = json::parse(in);
    if (j.at("schema_version").get<int>() != kDatasetSchemaVersion)
      throw Error(ErrorKind::SchemaMismatch, "unsupported observation schema_version");
    o.config_hash = j.value("config_hash", std::string());
    o.theta = j.value("theta", std::vector<double>{});
    o.demand.demand = j.at("demand").get<std::vector<double>>();
    o.g = rows_to_matrix<Eigen::MatrixXd>(j.at("g"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptFile, "bad observation " + path + ": " + e.what());
  }
  if (o.g.cols() != static_cast<Eigen::Index>(o.demand.size()))
    throw Error(ErrorKind::CorruptFile, "observation g and demand disagree on the horizon");
  return o;
}

Schedule complete_schedule(const FleetConfig& fleet, const Eigen::MatrixXd& g, const BinaryMatrix& v) {
  const auto J = static_cast<Eigen::Index>(fleet.unit_count());
  const auto T = static_cast<Eigen::Index>(fleet.horizon);
  if (g.rows() != J || g.cols() != T || v.rows() != J || v.cols() != T)
    throw Error(ErrorKind::DimensionMismatch, "schedule does not match fleet x horizon");
  Schedule s = Schedule::zeros(fleet.unit_count(), static_cast<std::size_t>(T));
  s.g = g;
  s.v = v;
  for (Eigen::Index j = 0; j < J; ++j) {
    const UnitParams& u = fleet.units[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < T; ++t) {
      const int prev = t > 0 ? v(j, t - 1) : (u.init_committed ? 1 : 0);
      s.y(j, t) = std::max(0, v(j, t) - prev);
      s.z(j, t) = std::max(0, prev - v(j, t));
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      const double v_prev = t > 0 ? v(j, t - 1) : (u.init_committed ? 1.0 : 0.0);
      const double g_prev = t > 0 ? g(j, t - 1) : u.init_output;
      const double z_next = t + 1 < T ? s.z(j, t + 1) : 0.0;
      double cap = u.gen_max * v(j, t);
      cap = std::min(cap, g_prev + u.ramp_up * v_prev + u.startup_rate * s.y(j, t));
      cap = std::min(cap, u.gen_max * (v(j, t) - z_next) + z_next * u.shutdown_rate);
      s.g_bar(j, t) = std::max(cap, g(j, t));
    }
  }
  return s;
}

Eigen::VectorXd observation_context(const Eigen::MatrixXd& g, const DemandProfile& demand) {
  Eigen::VectorXd c(g.size() + static_cast<Eigen::Index>(demand.size()));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < g.rows(); ++j)
    for (Eigen::Index t = 0; t < g.cols(); ++t) c(k++) = g(j, t);
  for (double d : demand.demand) c(k++) = d;
  return c;
}

Eigen::MatrixXd theta_matrix(const std::vector<SimRecord>& records) {
  if (records.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(records[0].theta.size()));
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t k = 0; k < records[i].theta.size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = records[i].theta[k];
  return m;
}

Eigen::MatrixXd context_matrix(const std::vector<SimRecord>& records) {
  if (records.empty()) return {};
  const Eigen::VectorXd first = observation_context(records[0].g, records[0].demand);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), first.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = observation_context(records[i].g, records[i].demand).transpose();
  return m;
}

}  // namespace ucsbi
