#pragma once

// Run configuration: one JSON document holding the fleet, the priors, the
// solver backend and the training / diagnostics settings.

#include "ucsbi/external_backend.hpp"
#include "ucsbi/flows.hpp"
#include "ucsbi/priors.hpp"
#include "ucsbi/uc_core.hpp"
#include "ucsbi/uc_milp.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace ucsbi {

inline constexpr int kRunConfigSchemaVersion = 1;

struct BackendConfig {
  std::string kind = "embedded";  // embedded | external
  std::string adapter = "native";
  std::string command;
  /// Substituted for {solver}; empty means locate_cbc().
  std::string solver;
  double mip_gap = 1e-9;
  double time_limit = 60.0;
  std::size_t max_binaries = 60;
  double kill_grace = 5.0;
};

struct TrainSettings {
  FlowKind flow = FlowKind::MAF;
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  int transforms = 3;
  int hidden_layers = 3;
  int hidden_units = 256;
  int bins = 8;
  std::uint64_t seed = 0;
  /// OpenMP threads; 0 keeps the runtime default.
  int workers = 0;
  /// Global gradient-norm clip, 0 disables.
  double grad_clip = 0.0;
  /// Bound on standardized context coordinates, 0 disables.
  double context_clip = 0.0;
};

struct DiagnosticsSettings {
  int coverage_samples = 1024;
  int levels = 19;
  int ppc_samples = 4096;
  int corner_bins = 40;
  double max_rejection_rate = 0.5;
};

struct DatasetSizes {
  std::size_t train = 65536;
  std::size_t val = 65536;
  std::size_t test = 4096;
};

struct RunConfig {
  int schema_version = kRunConfigSchemaVersion;
  std::string name;
  std::uint64_t seed = 0;
  FleetConfig fleet;
  ThetaPrior theta_prior;
  DemandPriorConfig demand_prior;
  BackendConfig backend;
  TrainSettings train;
  DiagnosticsSettings diagnostics;
  DatasetSizes dataset;
};

/// Parses and validates. Missing seeds are an error: runs never fall back to
/// wall-clock seeding. Throws InvalidConfig or SchemaMismatch.
RunConfig parse_run_config(const std::string& text);
/// As parse_run_config; a missing or unreadable file raises Io.
RunConfig load_run_config(const std::string& path);
/// The shipped reference configuration.
RunConfig default_run_config();

std::string run_config_to_string(const RunConfig& cfg);

/// Every broken invariant across sections; empty means valid.
std::vector<std::string> validate_run_config(const RunConfig& cfg);

/// First 16 hex digits of SHA-256 over the canonical JSON of the fleet and
/// both priors. Datasets and checkpoints carry it to detect mixing.
std::string config_hash(const RunConfig& cfg);

std::unique_ptr<MilpBackend> make_backend(const BackendConfig& cfg);

}  // namespace ucsbi
