#include "ucsbi/diagnostics.hpp"

#include "ucsbi/errors.hpp"
#include "ucsbi/simfarm.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>

namespace ucsbi {

using nlohmann::json;

double hpd_rank(const ConditionalDensity& q, const Vec& theta_star, const Vec& context, int M, Rng& rng) {
  if (M < 1) throw Error(ErrorKind::InvalidConfig, "need at least one posterior sample");
  if (theta_star.size() != q.theta_dim()) throw Error(ErrorKind::DimensionMismatch, "theta_star has the wrong size");
  const Mat draws = q.sample(context, rng, M);
  const Vec lp = q.log_prob(draws, context);
  const double lp_star = q.log_prob(theta_star.transpose(), context)(0);
  auto bad = [](double x) { return std::isnan(x) || x == std::numeric_limits<double>::infinity(); };
  if (bad(lp_star)) throw Error(ErrorKind::NonFiniteDensity, "density of theta_star is not finite");
  std::size_t above = 0;
  for (Eigen::Index m = 0; m < lp.size(); ++m) {
    if (bad(lp(m))) throw Error(ErrorKind::NonFiniteDensity, "posterior sample with non-finite density");
    if (lp(m) > lp_star) ++above;
  }
  return static_cast<double>(above) / static_cast<double>(M);
}

bool hpd_contains(const ConditionalDensity& q, const Vec& theta_star, const Vec& context, int M, double alpha,
                  Rng& rng) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidConfig, "alpha must lie in (0, 1)");
  return hpd_rank(q, theta_star, context, M, rng) < 1.0 - alpha;
}

std::vector<double> credibility_levels(int n) {
  std::vector<double> out;
  for (int k = 1; k <= n; ++k) out.push_back(static_cast<double>(k) / static_cast<double>(n + 1));
  return out;
}

std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double confidence) {
  using boost::math::binomial_distribution;
  if (n == 0) return {0.0, 1.0};
  const double a = 0.5 * (1.0 - confidence);
  const auto N = static_cast<double>(n), K = static_cast<double>(k);
  const double lo = binomial_distribution<>::find_lower_bound_on_p(N, K, a, binomial_distribution<>::clopper_pearson_exact_interval);
  const double hi = binomial_distribution<>::find_upper_bound_on_p(N, K, a, binomial_distribution<>::clopper_pearson_exact_interval);
  return {lo, hi};
}

CoverageCurve expected_coverage(const ConditionalDensity& q, const Mat& thetas, const Mat& contexts,
                                const std::vector<double>& levels, int M, std::uint64_t seed, bool parallel) {
  if (thetas.rows() != contexts.rows()) throw Error(ErrorKind::DimensionMismatch, "thetas and contexts differ in rows");
  for (std::size_t k = 0; k < levels.size(); ++k)
    if (!(levels[k] > 0.0 && levels[k] < 1.0) || (k > 0 && !(levels[k] > levels[k - 1])))
      throw Error(ErrorKind::InvalidConfig, "levels must be strictly increasing in (0, 1)");
  CoverageCurve c;
  c.levels = levels;
  c.pairs = static_cast<std::size_t>(thetas.rows());
  c.samples_per_pair = M;
  c.ranks.assign(c.pairs, 0.0);
  std::vector<std::exception_ptr> errors(c.pairs);
  const auto n = static_cast<std::int64_t>(c.pairs);
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      Rng rng = substream(seed, {static_cast<std::uint64_t>(i)});
      c.ranks[static_cast<std::size_t>(i)] =
          hpd_rank(q, thetas.row(i).transpose(), contexts.row(i).transpose(), M, rng);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (double level : levels) {
    std::size_t inside = 0;
    for (double r : c.ranks) inside += r < level ? 1 : 0;
    c.coverage.push_back(c.pairs ? static_cast<double>(inside) / static_cast<double>(c.pairs) : 0.0);
    const auto [lo, hi] = clopper_pearson(inside, c.pairs);
    c.ci_low.push_back(lo);
    c.ci_high.push_back(hi);
  }
  return c;
}

void write_coverage_csv(const std::string& path, const CoverageCurve& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "level,coverage,ci_low,ci_high\n";
  char buf[160];
  for (std::size_t k = 0; k < c.levels.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", c.levels[k], c.coverage[k], c.ci_low[k], c.ci_high[k]);
    out << buf;
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

double sorted_quantile(const std::vector<double>& s, double p) {
  if (s.empty()) throw Error(ErrorKind::DimensionMismatch, "quantile of an empty set");
  const double h = (static_cast<double>(s.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
}

double PpcBands::inside_fraction(int k, double tol) const {
  const Mat& l = lo[k];
  const Mat& h = hi[k];
  if (g_true.size() == 0) return 0.0;
  std::size_t inside = 0;
  for (Eigen::Index j = 0; j < g_true.rows(); ++j)
    for (Eigen::Index t = 0; t < g_true.cols(); ++t)
      inside += (g_true(j, t) >= l(j, t) - tol && g_true(j, t) <= h(j, t) + tol) ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(g_true.size());
}

PpcBands ppc_from_thetas(const FleetConfig& fleet, const Mat& thetas, const DemandProfile& demand, const Mat& g_true,
                         const MilpBackend& backend, const PpcOptions& opts) {
  const auto J = static_cast<Eigen::Index>(fleet.unit_count());
  const auto T = static_cast<Eigen::Index>(fleet.horizon);
  if (g_true.rows() != J || g_true.cols() != T) throw Error(ErrorKind::DimensionMismatch, "g_true does not match the fleet");
  if (thetas.rows() < 1) throw Error(ErrorKind::InvalidConfig, "need at least one parameter draw");
  const auto n = static_cast<std::int64_t>(thetas.rows());
  std::vector<Mat> g(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 1) if (opts.parallel)
  for (std::int64_t k = 0; k < n; ++k) {
    try {
      ThetaVector th;
      for (Eigen::Index i = 0; i < thetas.cols(); ++i) th.costs.push_back(thetas(k, i));
      g[static_cast<std::size_t>(k)] = solve_uc(fleet, th, demand, backend).g;
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }

  PpcBands b;
  std::exception_ptr first;
  for (std::int64_t k = 0; k < n; ++k) {
    const auto& e = errors[static_cast<std::size_t>(k)];
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::SolverTimeout && err.kind() != ErrorKind::Infeasible &&
          err.kind() != ErrorKind::BackendError)
        throw;
    }
    if (!first) first = e;
    ++b.failed_solves;
  }
  b.accepted = static_cast<std::size_t>(n) - b.failed_solves;
  if (b.accepted == 0 || static_cast<double>(b.failed_solves) > opts.max_failed_fraction * static_cast<double>(n)) {
    std::string why;
    try {
      std::rethrow_exception(first);
    } catch (const std::exception& e) {
      why = e.what();
    }
    throw Error(ErrorKind::SolverTimeout, "predictive solve budget exceeded: " + std::to_string(b.failed_solves) +
                                              " of " + std::to_string(n) + " solves failed; first: " + why);
  }

  for (int k = 0; k < 3; ++k) {
    b.lo[k] = Mat(J, T);
    b.hi[k] = Mat(J, T);
  }
  b.median = Mat(J, T);
  b.mean = Mat(J, T);
  b.g_true = g_true;
  std::vector<double> cell;
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index t = 0; t < T; ++t) {
      cell.clear();
      double sum = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        if (errors[static_cast<std::size_t>(k)]) continue;
        const double x = g[static_cast<std::size_t>(k)](j, t);
        cell.push_back(x);
        sum += x;
      }
      std::sort(cell.begin(), cell.end());
      for (int q = 0; q < 3; ++q) {
        b.lo[q](j, t) = sorted_quantile(cell, 0.5 * (1.0 - kBandMass[q]));
        b.hi[q](j, t) = sorted_quantile(cell, 0.5 * (1.0 + kBandMass[q]));
      }
      b.median(j, t) = sorted_quantile(cell, 0.5);
      b.mean(j, t) = sum / static_cast<double>(cell.size());
    }
  return b;
}

PpcBands ppc(const ConditionalDensity& q, const FleetConfig& fleet, const ThetaPrior& prior,
             const DemandProfile& demand, const Mat& g_true, int n_samples, const MilpBackend& backend, Rng& rng,
             const PpcOptions& opts) {
  if (n_samples < 1) throw Error(ErrorKind::InvalidConfig, "need at least one predictive sample");
  if (static_cast<std::size_t>(q.theta_dim()) != prior.dim())
    throw Error(ErrorKind::DimensionMismatch, "model and prior differ in theta dimension");
  const Vec context = observation_context(g_true, demand);
  Mat accepted(n_samples, q.theta_dim());
  Eigen::Index have = 0;
  std::size_t drawn = 0, rejected = 0;
  while (have < n_samples) {
    const Mat draws = q.sample(context, rng, n_samples - have);
    for (Eigen::Index r = 0; r < draws.rows(); ++r) {
      ++drawn;
      ThetaVector th;
      for (Eigen::Index i = 0; i < draws.cols(); ++i) th.costs.push_back(draws(r, i));
      if (prior.contains(th)) accepted.row(have++) = draws.row(r);
      else ++rejected;
    }
    if (static_cast<double>(rejected) > opts.max_rejection_rate * static_cast<double>(drawn))
      throw Error(ErrorKind::RejectionRateTooHigh, std::to_string(rejected) + " of " + std::to_string(drawn) +
                                                       " posterior draws fell outside the prior box");
  }
  PpcBands b = ppc_from_thetas(fleet, accepted, demand, g_true, backend, opts);
  b.rejected = rejected;
  return b;
}

void write_ppc_csv(const std::string& path, const PpcBands& b) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "unit,t,q_lo_3s,q_lo_2s,q_lo_1s,median,mean,q_hi_1s,q_hi_2s,q_hi_3s,g_true\n";
  char buf[512];
  for (Eigen::Index j = 0; j < b.g_true.rows(); ++j)
    for (Eigen::Index t = 0; t < b.g_true.cols(); ++t) {
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    static_cast<long>(j), static_cast<long>(t), b.lo[2](j, t), b.lo[1](j, t), b.lo[0](j, t),
                    b.median(j, t), b.mean(j, t), b.hi[0](j, t), b.hi[1](j, t), b.hi[2](j, t), b.g_true(j, t));
      out << buf;
    }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

CornerData corner_data(const Mat& samples, const Vec& theta_star, int bins) {
  if (samples.rows() < 1) throw Error(ErrorKind::InvalidConfig, "corner data needs samples");
  if (bins < 2) throw Error(ErrorKind::InvalidConfig, "corner data needs at least two bins");
  const auto d = samples.cols();
  CornerData c;
  c.bins = bins;
  c.theta_star = theta_star;
  c.lower = samples.colwise().minCoeff().transpose();
  c.upper = samples.colwise().maxCoeff().transpose();
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(c.upper(i) > c.lower(i))) {
      c.lower(i) -= 0.5;
      c.upper(i) += 0.5;
    }
  const auto n = samples.rows();
  Eigen::MatrixXi idx(n, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double w = (c.upper(i) - c.lower(i)) / bins;
    for (Eigen::Index r = 0; r < n; ++r)
      idx(r, i) = std::clamp(static_cast<int>(std::floor((samples(r, i) - c.lower(i)) / w)), 0, bins - 1);
  }
  const double unit = 1.0 / static_cast<double>(n);
  c.marginals = Mat::Zero(d, bins);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index r = 0; r < n; ++r) c.marginals(i, idx(r, i)) += unit;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      CornerData::Pair p{static_cast<int>(i), static_cast<int>(j), Mat::Zero(bins, bins)};
      for (Eigen::Index r = 0; r < n; ++r) p.mass(idx(r, i), idx(r, j)) += unit;
      c.pairs.push_back(std::move(p));
    }
  return c;
}

namespace {

json rows_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> vec_of(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void write_corner_json(const std::string& path, const CornerData& c) {
  json pairs = json::array();
  for (const auto& p : c.pairs) pairs.push_back({{"i", p.i}, {"j", p.j}, {"mass", rows_json(p.mass)}});
  const json j = {{"dims", c.lower.size()},
                  {"bins", c.bins},
                  {"lower", vec_of(c.lower)},
                  {"upper", vec_of(c.upper)},
                  {"theta_star", vec_of(c.theta_star)},
                  {"marginals", rows_json(c.marginals)},
                  {"pairs", pairs}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << j.dump(1) << "\n";
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

}  // namespace ucsbi
