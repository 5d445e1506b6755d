#include "ucsbi/priors.hpp"

#include "ucsbi/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ucsbi {

using nlohmann::json;

bool ThetaPrior::contains(const ThetaVector& theta) const {
  if (theta.size() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i)
    if (!(theta[i] >= low[i] && theta[i] <= high[i])) return false;
  return true;
}

std::vector<std::string> validate_prior(const ThetaPrior& p) {
  std::vector<std::string> out;
  if (p.low.size() != p.high.size()) out.emplace_back("theta prior: low and high differ in length");
  if (p.low.empty()) out.emplace_back("theta prior: empty");
  for (std::size_t i = 0; i < std::min(p.low.size(), p.high.size()); ++i) {
    if (!std::isfinite(p.low[i]) || !std::isfinite(p.high[i]))
      out.push_back("theta prior " + std::to_string(i) + ": non-finite bound");
    else if (!(p.low[i] > 0.0)) out.push_back("theta prior " + std::to_string(i) + ": low must be > 0");
    else if (!(p.low[i] < p.high[i])) out.push_back("theta prior " + std::to_string(i) + ": low must be < high");
  }
  return out;
}

ThetaVector sample_theta(const ThetaPrior& prior, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ThetaVector th;
  th.costs.resize(prior.dim());
  for (std::size_t i = 0; i < prior.dim(); ++i)
    th.costs[i] = std::min(prior.high[i], prior.low[i] + (prior.high[i] - prior.low[i]) * u(rng));
  return th;
}

double log_prior_theta(const ThetaPrior& prior, const ThetaVector& theta) {
  if (!prior.contains(theta)) return -std::numeric_limits<double>::infinity();
  double lp = 0.0;
  for (std::size_t i = 0; i < prior.dim(); ++i) lp -= std::log(prior.high[i] - prior.low[i]);
  return lp;
}

std::vector<std::string> validate_demand_prior(const DemandPriorConfig& c) {
  std::vector<std::string> out;
  if (!(c.base > 0.0) || !std::isfinite(c.base)) out.emplace_back("demand prior: base must be > 0");
  for (std::size_t k = 0; k < c.components.size(); ++k) {
    const auto& s = c.components[k];
    if (!(s.period > 0.0) || !std::isfinite(s.period) || !std::isfinite(s.amplitude) || !std::isfinite(s.phase))
      out.push_back("demand prior component " + std::to_string(k) + ": period must be > 0 and values finite");
  }
  if (!(c.noise_sigma_fraction >= 0.0 && c.noise_sigma_fraction < 1.0))
    out.emplace_back("demand prior: noise_sigma_fraction must be in [0, 1)");
  if (!std::isfinite(c.floor) || c.floor < 0.0) out.emplace_back("demand prior: floor must be finite and >= 0");
  return out;
}

std::vector<double> demand_mean(const DemandPriorConfig& cfg, int horizon) {
  std::vector<double> mu(static_cast<std::size_t>(std::max(0, horizon)), cfg.base);
  for (std::size_t t = 0; t < mu.size(); ++t)
    for (const auto& c : cfg.components)
      mu[t] += c.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / c.period + c.phase);
  return mu;
}

DemandProfile sample_demand(const DemandPriorConfig& cfg, int horizon, Rng& rng) {
  const std::vector<double> mu = demand_mean(cfg, horizon);
  const double peak = mu.empty() ? 0.0 : *std::max_element(mu.begin(), mu.end());
  const double sigma = cfg.noise_sigma_fraction * peak;
  std::normal_distribution<double> n(0.0, 1.0);
  DemandProfile d;
  d.demand.resize(mu.size());
  for (std::size_t t = 0; t < mu.size(); ++t) {
    const double eps = sigma > 0.0 ? sigma * n(rng) : 0.0;
    d.demand[t] = std::max(cfg.floor, mu[t] + eps);
  }
  return d;
}

void to_json(json& j, const ThetaPrior& p) { j = json{{"low", p.low}, {"high", p.high}}; }

void from_json(const json& j, ThetaPrior& p) {
  j.at("low").get_to(p.low);
  j.at("high").get_to(p.high);
}

void to_json(json& j, const SinusoidComponent& c) {
  j = json{{"amplitude", c.amplitude}, {"period", c.period}, {"phase", c.phase}};
}

void from_json(const json& j, SinusoidComponent& c) {
  j.at("amplitude").get_to(c.amplitude);
  j.at("period").get_to(c.period);
  c.phase = j.value("phase", 0.0);
}

void to_json(json& j, const DemandPriorConfig& c) {
  j = json{{"base", c.base},
           {"components", c.components},
           {"noise_sigma_fraction", c.noise_sigma_fraction},
           {"floor", c.floor}};
}

void from_json(const json& j, DemandPriorConfig& c) {
  j.at("base").get_to(c.base);
  c.components = j.value("components", std::vector<SinusoidComponent>{});
  c.noise_sigma_fraction = j.value("noise_sigma_fraction", 0.10);
  c.floor = j.value("floor", 0.0);
}

}  // namespace ucsbi
