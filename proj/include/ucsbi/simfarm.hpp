#pragma once

// Dataset generation: theta ~ prior, delta ~ demand prior, G = solve_uc.
// Records go to a JSONL file with a sidecar manifest (docs/formats.md).

#include "ucsbi/config.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ucsbi {

inline constexpr int kDatasetSchemaVersion = 1;

struct SimRecord {
  std::uint64_t index = 0;
  /// Resampling round that produced the record; 0 unless earlier draws failed.
  std::uint32_t attempt = 0;
  ThetaVector theta;
  DemandProfile demand;
  Eigen::MatrixXd g;  // units x horizon
  BinaryMatrix v;
  double objective = 0.0;

  bool operator==(const SimRecord& o) const {
    return index == o.index && attempt == o.attempt && theta == o.theta && demand == o.demand && g == o.g &&
           v == o.v && objective == o.objective;
  }
};

struct SkipEntry {
  std::uint64_t index = 0;
  std::uint32_t attempt = 0;
  std::string error;
  bool operator==(const SkipEntry&) const = default;
};

struct DatasetManifest {
  int schema_version = kDatasetSchemaVersion;
  std::string config_hash;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  std::string backend;
  std::size_t units = 0;
  int horizon = 0;
  std::size_t theta_dim = 0;
  /// SHA-256 of the record file.
  std::string records_sha256;
  std::vector<SkipEntry> skips;
  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SimRecord> records;
};

std::string manifest_path(const std::string& records_path);

struct GenerateOptions {
  /// OpenMP threads; 0 keeps the runtime default, 1 runs the serial reference.
  int workers = 0;
  /// Draws tried per index before giving up.
  std::uint32_t max_attempts = 16;
  /// Abort once more than this fraction of all solves raised BackendError
  /// (checked after at least `min_solves_for_rate` solves).
  double max_backend_error_rate = 0.1;
  std::size_t min_solves_for_rate = 20;
  /// Schedules failing validate_schedule at this tolerance count as failures.
  double validate_tol = 1e-6;
};

/// One record, reproducible from (config, seed, index, attempt).
SimRecord simulate_record(const RunConfig& cfg, std::uint64_t seed, std::uint64_t index, std::uint32_t attempt,
                          const MilpBackend& backend, double validate_tol = 1e-6);

/// Writes n records to `path` in index order, plus the manifest. Output is
/// independent of `workers`. Timeouts, infeasible draws and backend errors
/// are logged as skips and the index is redrawn from a fresh substream.
/// Too many backend errors abort with BackendError and no files left behind.
DatasetManifest generate_dataset(const RunConfig& cfg, std::uint64_t n, std::uint64_t seed,
                                 const MilpBackend& backend, const std::string& path,
                                 const GenerateOptions& opts = {});

/// Writes atomically (temporary files renamed into place); fills
/// count / records_sha256 of the stored manifest.
void write_dataset(const std::string& path, const std::vector<SimRecord>& records, DatasetManifest manifest);

/// Reads records and manifest. With `expected_hash`, a different config hash
/// raises ConfigHashMismatch. Throws CorruptFile / SchemaMismatch / Io.
Dataset read_dataset(const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt);

std::string record_to_json_line(const SimRecord& r);
SimRecord record_from_json_line(const std::string& line);

/// A single observed (G*, delta*), optionally with the theta* behind it.
struct Observation {
  std::string config_hash;
  std::vector<double> theta;  // empty when unknown
  DemandProfile demand;
  Eigen::MatrixXd g;
};

Observation observation_from_record(const SimRecord& r, const std::string& config_hash);
/// JSON object {schema_version, config_hash, theta, demand, g}.
void write_observation(const std::string& path, const Observation& obs);
Observation read_observation(const std::string& path);

/// Full schedule implied by a stored (g, v): y and z are the minimal
/// start/stop indicators and g_bar the largest admissible available output.
Schedule complete_schedule(const FleetConfig& fleet, const Eigen::MatrixXd& g, const BinaryMatrix& v);

/// Observation vector fed to the flow: g flattened unit-major then demand.
Eigen::VectorXd observation_context(const Eigen::MatrixXd& g, const DemandProfile& demand);

/// Theta rows (n x d) and raw context rows (n x (J*T + T)) of a dataset.
Eigen::MatrixXd theta_matrix(const std::vector<SimRecord>& records);
Eigen::MatrixXd context_matrix(const std::vector<SimRecord>& records);

}  // namespace ucsbi
