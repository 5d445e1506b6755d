#pragma once

// Posterior checks: expected coverage of highest-density regions, posterior
// predictive bands of the dispatch, and histogram data for corner plots.

#include "ucsbi/flows.hpp"
#include "ucsbi/priors.hpp"
#include "ucsbi/uc_milp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ucsbi {

/// Anything that can draw from and score q(theta | context).
class ConditionalDensity {
 public:
  virtual ~ConditionalDensity() = default;
  virtual int theta_dim() const = 0;
  /// n x d draws in original theta units.
  virtual Mat sample(const Vec& context, Rng& rng, Eigen::Index n) const = 0;
  /// One log density per theta row, all under the same context.
  virtual Vec log_prob(const Mat& thetas, const Vec& context) const = 0;
};

class FlowDensity final : public ConditionalDensity {
 public:
  explicit FlowDensity(const FlowModel& model) : model_(model) {}
  int theta_dim() const override { return model_.spec().theta_dim; }
  Mat sample(const Vec& context, Rng& rng, Eigen::Index n) const override { return model_.sample(context, rng, n); }
  Vec log_prob(const Mat& thetas, const Vec& context) const override {
    return model_.log_prob(thetas, context.transpose());
  }

 private:
  const FlowModel& model_;
};

/// Fraction of M draws from q(.|context) whose density exceeds that of
/// theta_star (ties count as not greater). Throws NonFiniteDensity on NaN or
/// +inf densities.
double hpd_rank(const ConditionalDensity& q, const Vec& theta_star, const Vec& context, int M, Rng& rng);

/// theta_star lies in the level-(1 - alpha) HPD region estimate:
/// hpd_rank < 1 - alpha.
bool hpd_contains(const ConditionalDensity& q, const Vec& theta_star, const Vec& context, int M, double alpha,
                  Rng& rng);

/// 0.05, 0.10, ..., 0.95 for 19 levels; in general k / (n + 1).
std::vector<double> credibility_levels(int n);

struct CoverageCurve {
  std::vector<double> levels;
  std::vector<double> coverage;
  std::vector<double> ci_low;   // 95% Clopper-Pearson
  std::vector<double> ci_high;
  std::size_t pairs = 0;
  int samples_per_pair = 0;
  /// hpd_rank per test pair, in input order.
  std::vector<double> ranks;
};

/// Coverage over test pairs (theta rows, context rows). Pair i uses the
/// stream substream(seed, {i}), so results do not depend on `parallel`.
CoverageCurve expected_coverage(const ConditionalDensity& q, const Mat& thetas, const Mat& contexts,
                                const std::vector<double>& levels, int M, std::uint64_t seed, bool parallel = true);

/// Exact two-sided binomial interval for k successes out of n.
std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double confidence = 0.95);

/// Columns level, coverage, ci_low, ci_high.
void write_coverage_csv(const std::string& path, const CoverageCurve& c);

/// Central band masses (one, two, three sigma).
inline constexpr double kBandMass[3] = {0.687, 0.955, 0.997};

struct PpcBands {
  /// Each units x horizon: lo[k] / hi[k] bound the kBandMass[k] central band.
  Mat lo[3];
  Mat hi[3];
  Mat median;
  Mat mean;
  Mat g_true;
  std::size_t accepted = 0;
  std::size_t rejected = 0;      // draws outside the prior box
  std::size_t failed_solves = 0; // dropped draws whose UC solve failed

  /// Share of cells where g_true lies inside band k (with tolerance tol).
  double inside_fraction(int k, double tol = 1e-6) const;
};

struct PpcOptions {
  double max_rejection_rate = 0.5;
  /// Share of accepted draws whose solve may fail before SolverTimeout.
  double max_failed_fraction = 0.05;
  bool parallel = true;
};

/// Predictive bands from given parameter draws, each solved with the fixed
/// demand. Draw k is solved independently; the reduction is in draw order.
PpcBands ppc_from_thetas(const FleetConfig& fleet, const Mat& thetas, const DemandProfile& demand,
                         const Mat& g_true, const MilpBackend& backend, const PpcOptions& opts = {});

/// Samples n draws from q(.|G*, delta*), rejecting and redrawing those
/// outside the prior box (RejectionRateTooHigh above the configured rate),
/// then delegates to ppc_from_thetas.
PpcBands ppc(const ConditionalDensity& q, const FleetConfig& fleet, const ThetaPrior& prior,
             const DemandProfile& demand, const Mat& g_true, int n_samples, const MilpBackend& backend, Rng& rng,
             const PpcOptions& opts = {});

/// Columns unit, t, q_lo_3s, q_lo_2s, q_lo_1s, median, mean, q_hi_1s,
/// q_hi_2s, q_hi_3s, g_true.
void write_ppc_csv(const std::string& path, const PpcBands& b);

/// Linear-interpolation quantile of sorted values.
double sorted_quantile(const std::vector<double>& sorted, double p);

struct CornerData {
  int bins = 0;
  Vec lower;
  Vec upper;
  /// d x bins, each row sums to 1.
  Mat marginals;
  struct Pair {
    int i;
    int j;
    Mat mass;  // bins (dimension i) x bins (dimension j)
  };
  std::vector<Pair> pairs;
  Vec theta_star;  // may be empty
};

CornerData corner_data(const Mat& samples, const Vec& theta_star, int bins);

void write_corner_json(const std::string& path, const CornerData& c);

}  // namespace ucsbi
