#pragma once

// Unit commitment domain types: the known fleet parameters, the inferable
// cost vector, the demand profile and the resulting generation schedule.
// Units: MW for power, currency/MWh for marginal costs, one step = one hour.

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace ucsbi {

/// One linear piece of a convex generation cost: cost >= slope * g + intercept.
struct CostSegment {
  double slope = 0.0;
  double intercept = 0.0;

  bool operator==(const CostSegment&) const = default;
};

struct UnitParams {
  std::string name;
  double startup_cost = 0.0;
  double ramp_up = 0.0;
  double ramp_down = 0.0;
  double startup_rate = 0.0;
  double shutdown_rate = 0.0;
  int min_up = 0;
  int min_down = 0;
  double gen_max = 0.0;
  double gen_min = 0.0;
  /// Steps the unit must still stay on (resp. off) at the start of the horizon.
  int init_on_steps = 0;
  int init_off_steps = 0;
  bool init_committed = false;
  double init_output = 0.0;
  /// For units with cost_is_theta the single segment's slope is replaced by
  /// the corresponding theta entry at build time.
  std::vector<CostSegment> cost_segments;
  bool cost_is_theta = false;
  bool is_dsm = false;

  bool operator==(const UnitParams&) const = default;
};

struct FleetConfig {
  std::vector<UnitParams> units;
  int horizon = 24;
  /// Spinning reserve requirement R(t) = reserve_fraction * D(t).
  double reserve_fraction = 0.0;

  std::size_t unit_count() const { return units.size(); }
  /// Number of units whose marginal cost is inferred.
  std::size_t theta_dim() const;
  /// Indices of the units carrying a theta entry, in theta order.
  std::vector<std::size_t> theta_units() const;

  bool operator==(const FleetConfig&) const = default;
};

struct ThetaVector {
  std::vector<double> costs;

  std::size_t size() const { return costs.size(); }
  double operator[](std::size_t i) const { return costs[i]; }
  bool operator==(const ThetaVector&) const = default;
};

struct DemandProfile {
  std::vector<double> demand;

  std::size_t size() const { return demand.size(); }
  double operator[](std::size_t t) const { return demand[t]; }
  bool operator==(const DemandProfile&) const = default;
};

using BinaryMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Generation schedule; every matrix is (units x horizon).
struct Schedule {
  Eigen::MatrixXd g;
  Eigen::MatrixXd g_bar;
  BinaryMatrix v;
  BinaryMatrix y;
  BinaryMatrix z;
  double objective_value = 0.0;

  static Schedule zeros(std::size_t units, std::size_t horizon);
};

/// The shipped 10-unit reference fleet (9 thermal units + DSM as unit 10).
/// Values live in config/default_fleet.json and are embedded at build time.
FleetConfig default_fleet();

/// One message per broken invariant, each naming the unit index when the
/// invariant is per unit. Empty means the fleet is valid.
std::vector<std::string> validate_fleet(const FleetConfig& cfg);

/// Throws InvalidFleet listing every violation.
void require_valid_fleet(const FleetConfig& cfg);

/// Theta entries must be finite, strictly positive and match the fleet.
void require_valid_theta(const FleetConfig& cfg, const ThetaVector& theta);
void require_valid_demand(const FleetConfig& cfg, const DemandProfile& demand);

void to_json(nlohmann::json& j, const CostSegment& s);
void from_json(const nlohmann::json& j, CostSegment& s);
void to_json(nlohmann::json& j, const UnitParams& u);
void from_json(const nlohmann::json& j, UnitParams& u);
void to_json(nlohmann::json& j, const FleetConfig& f);
void from_json(const nlohmann::json& j, FleetConfig& f);

inline constexpr int kFleetSchemaVersion = 1;

/// Serialize as a standalone fleet document carrying schema_version.
std::string fleet_to_string(const FleetConfig& fleet);
FleetConfig fleet_from_string(const std::string& text);
void save_fleet(const std::string& path, const FleetConfig& fleet);
FleetConfig load_fleet(const std::string& path);

}  // namespace ucsbi
