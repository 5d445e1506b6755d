#pragma once

// Prior over the inferable costs (independent uniform box) and the synthetic
// demand generator (sum of sinusoids plus Gaussian noise, clamped below).

#include "ucsbi/rng.hpp"
#include "ucsbi/uc_core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace ucsbi {

struct ThetaPrior {
  std::vector<double> low;
  std::vector<double> high;

  std::size_t dim() const { return low.size(); }
  bool contains(const ThetaVector& theta) const;
  bool operator==(const ThetaPrior&) const = default;
};

/// Empty means valid: low < high elementwise, all positive and finite.
std::vector<std::string> validate_prior(const ThetaPrior& prior);

ThetaVector sample_theta(const ThetaPrior& prior, Rng& rng);

/// -sum log(high - low) inside the box, -inf outside.
double log_prior_theta(const ThetaPrior& prior, const ThetaVector& theta);

struct SinusoidComponent {
  double amplitude = 0.0;
  double period = 24.0;  // steps
  double phase = 0.0;    // radians
  bool operator==(const SinusoidComponent&) const = default;
};

struct DemandPriorConfig {
  double base = 1.0;
  std::vector<SinusoidComponent> components;
  double noise_sigma_fraction = 0.10;
  double floor = 0.0;
  bool operator==(const DemandPriorConfig&) const = default;
};

std::vector<std::string> validate_demand_prior(const DemandPriorConfig& cfg);

/// mu(t) = base + sum_k A_k sin(2 pi t / P_k + phi_k), t = 0 .. T-1.
std::vector<double> demand_mean(const DemandPriorConfig& cfg, int horizon);

/// delta(t) = max(floor, mu(t) + eps_t), eps_t ~ N(0, (noise_sigma_fraction * max_t mu)^2).
DemandProfile sample_demand(const DemandPriorConfig& cfg, int horizon, Rng& rng);

void to_json(nlohmann::json& j, const ThetaPrior& p);
void from_json(const nlohmann::json& j, ThetaPrior& p);
void to_json(nlohmann::json& j, const SinusoidComponent& c);
void from_json(const nlohmann::json& j, SinusoidComponent& c);
void to_json(nlohmann::json& j, const DemandPriorConfig& c);
void from_json(const nlohmann::json& j, DemandPriorConfig& c);

}  // namespace ucsbi
