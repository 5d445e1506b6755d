#include "ucsbi/lp_simplex.hpp"

#include "ucsbi/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace ucsbi {

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
    case LpStatus::IterationLimit: return "IterationLimit";
  }
  return "Unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Working state of the tableau method. Column layout: structural columns,
// then one slack per row, then artificial columns.
class Tableau {
 public:
  Tableau(const MilpInstance& inst, std::span<const double> lower, std::span<const double> upper,
          const LpOptions& opt)
      : opt_(opt) {
    n_ = static_cast<int>(inst.column_count());
    m_ = static_cast<int>(inst.constraints.size());

    dense_a_ = RowMatrix::Zero(m_, n_);
    rhs_ = Eigen::VectorXd::Zero(m_);
    for (int i = 0; i < m_; ++i) {
      const Constraint& c = inst.constraints[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < c.row.size(); ++k) dense_a_(i, c.row.index[k]) += c.row.value[k];
      rhs_(i) = c.rhs;
    }
    cost_ = Eigen::VectorXd::Zero(n_);
    for (std::size_t k = 0; k < inst.objective.size(); ++k)
      cost_(inst.objective.index[k]) += inst.objective.value[k];

    lo_.assign(lower.begin(), lower.end());
    hi_.assign(upper.begin(), upper.end());
    for (int i = 0; i < m_; ++i) {
      switch (inst.constraints[static_cast<std::size_t>(i)].relation) {
        case Relation::LessEqual: lo_.push_back(0.0); hi_.push_back(kInf); break;
        case Relation::GreaterEqual: lo_.push_back(-kInf); hi_.push_back(0.0); break;
        case Relation::Equal: lo_.push_back(0.0); hi_.push_back(0.0); break;
      }
    }

    // Nonbasic starting values for structural columns.
    x_.assign(static_cast<std::size_t>(n_ + m_), 0.0);
    for (int j = 0; j < n_; ++j) x_[j] = start_value(j);

    Eigen::VectorXd xs = Eigen::Map<const Eigen::VectorXd>(x_.data(), n_);
    Eigen::VectorXd resid = rhs_ - dense_a_ * xs;

    // Decide which rows need an artificial column.
    std::vector<double>& art_sign = art_sign_;
    std::vector<int>& art_row = art_row_;
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      const double r = resid(i);
      if (r >= lo_[s] - opt_.feasibility_tol && r <= hi_[s] + opt_.feasibility_tol) continue;
      art_row.push_back(i);
      const double clamped = std::clamp(r, lo_[s], hi_[s]);
      art_sign.push_back(r > clamped ? 1.0 : -1.0);
    }
    na_ = static_cast<int>(art_row.size());
    ncols_ = n_ + m_ + na_;
    for (int a = 0; a < na_; ++a) {
      lo_.push_back(0.0);
      hi_.push_back(kInf);
      x_.push_back(0.0);
    }

    tab_ = RowMatrix::Zero(m_, ncols_);
    tab_.leftCols(n_) = dense_a_;
    for (int i = 0; i < m_; ++i) tab_(i, n_ + i) = 1.0;
    basis_.assign(static_cast<std::size_t>(m_), -1);
    is_basic_.assign(static_cast<std::size_t>(ncols_), false);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    for (int a = 0; a < na_; ++a) {
      const int i = art_row[a];
      const int col = n_ + m_ + a;
      tab_(i, col) = art_sign[a];
      basis_[i] = col;
    }
    for (int i = 0; i < m_; ++i) {
      const int b = basis_[i];
      is_basic_[b] = true;
      if (b >= n_ + m_) {
        // Basic artificial: the slack sits at its bound nearest the residual.
        const int s = n_ + i;
        const double clamped = std::clamp(resid(i), lo_[s], hi_[s]);
        x_[s] = clamped;
        const double sign = tab_(i, b);
        tab_.row(i) /= sign;
        x_[b] = (resid(i) - clamped) / sign;
      } else {
        x_[b] = resid(i);
      }
    }
  }

  LpResult run() {
    LpResult res;
    const std::size_t limit =
        opt_.iteration_limit ? opt_.iteration_limit : 50 * static_cast<std::size_t>(m_ + ncols_) + 1000;

    if (na_ > 0) {
      Eigen::VectorXd c1 = Eigen::VectorXd::Zero(ncols_);
      c1.tail(na_).setOnes();
      set_costs(c1);
      const LpStatus st = iterate(limit, res.iterations);
      if (st == LpStatus::IterationLimit) {
        res.status = st;
        return res;
      }
      double infeas = 0.0;
      for (int a = 0; a < na_; ++a) infeas += x_[n_ + m_ + a];
      const double scale = 1.0 + rhs_.cwiseAbs().maxCoeff();
      if (infeas > 1e-7 * scale) {
        res.status = LpStatus::Infeasible;
        return res;
      }
      // Artificials are pinned at zero for phase 2.
      for (int a = 0; a < na_; ++a) {
        hi_[n_ + m_ + a] = 0.0;
        if (!is_basic_[n_ + m_ + a]) x_[n_ + m_ + a] = 0.0;
      }
    }

    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(ncols_);
    c2.head(n_) = cost_;
    set_costs(c2);
    const LpStatus st = iterate(limit, res.iterations);
    res.status = st;
    if (st != LpStatus::Optimal) return res;

    refine();
    res.x.assign(x_.begin(), x_.begin() + n_);
    res.objective = cost_.dot(Eigen::Map<const Eigen::VectorXd>(res.x.data(), n_));
    return res;
  }

 private:
  double start_value(int j) const {
    if (std::isfinite(lo_[j])) return lo_[j];
    if (std::isfinite(hi_[j])) return hi_[j];
    return 0.0;
  }

  void set_costs(const Eigen::VectorXd& c) {
    c_ = c;
    Eigen::VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) cb(i) = c_(basis_[i]);
    d_ = c_ - tab_.transpose() * cb;
    for (int i = 0; i < m_; ++i) d_(basis_[i]) = 0.0;
  }

  // Direction in which nonbasic column j may move profitably: +1, -1 or 0.
  int improving_direction(int j) const {
    const double dj = d_(j);
    if (dj < -opt_.optimality_tol && x_[j] < hi_[j] - opt_.feasibility_tol) return +1;
    if (dj > opt_.optimality_tol && x_[j] > lo_[j] + opt_.feasibility_tol) return -1;
    return 0;
  }

  LpStatus iterate(std::size_t limit, std::size_t& iterations) {
    int degenerate_run = 0;
    bool bland = false;
    while (true) {
      if (iterations >= limit) return LpStatus::IterationLimit;

      int q = -1;
      int dir = 0;
      double best = 0.0;
      for (int j = 0; j < ncols_; ++j) {
        if (is_basic_[j]) continue;
        const int dj = improving_direction(j);
        if (dj == 0) continue;
        if (bland) {
          q = j;
          dir = dj;
          break;
        }
        const double score = std::abs(d_(j));
        if (score > best) {
          best = score;
          q = j;
          dir = dj;
        }
      }
      if (q < 0) return LpStatus::Optimal;
      ++iterations;

      // Ratio test.
      double t = hi_[q] - lo_[q];  // bound flip distance (inf if either bound is)
      int leave_row = -1;
      double leave_alpha = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double alpha = dir * tab_(i, q);
        if (std::abs(alpha) <= opt_.pivot_tol) continue;
        const int b = basis_[i];
        double limit_i;
        if (alpha > 0.0) {
          if (!std::isfinite(lo_[b])) continue;
          limit_i = std::max(0.0, (x_[b] - lo_[b]) / alpha);
        } else {
          if (!std::isfinite(hi_[b])) continue;
          limit_i = std::max(0.0, (hi_[b] - x_[b]) / -alpha);
        }
        bool take = false;
        if (limit_i < t - 1e-12) {
          take = true;
        } else if (limit_i <= t + 1e-12 && leave_row >= 0) {
          take = bland ? basis_[i] < basis_[leave_row] : std::abs(alpha) > std::abs(leave_alpha);
        }
        if (take) {
          t = limit_i;
          leave_row = i;
          leave_alpha = alpha;
        }
      }
      if (!std::isfinite(t)) return LpStatus::Unbounded;

      if (t <= 1e-12) {
        if (++degenerate_run > 50) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      // Move along the edge.
      x_[q] += dir * t;
      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= dir * t * tab_(i, q);

      if (leave_row < 0) {
        // Bound flip: snap the entering column onto the bound it reached.
        x_[q] = dir > 0 ? hi_[q] : lo_[q];
        continue;
      }
      const int leaving = basis_[leave_row];
      x_[leaving] = leave_alpha > 0.0 ? lo_[leaving] : hi_[leaving];
      pivot(leave_row, q);
    }
  }

  void pivot(int r, int q) {
    const double piv = tab_(r, q);
    tab_.row(r) /= piv;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = tab_(i, q);
      if (f != 0.0) tab_.row(i) -= f * tab_.row(r);
    }
    const double fd = d_(q);
    if (fd != 0.0) d_ -= fd * tab_.row(r).transpose();
    d_(q) = 0.0;
    is_basic_[basis_[r]] = false;
    basis_[r] = q;
    is_basic_[q] = true;
  }

  // Recompute basic values from the original data to shed pivoting drift.
  void refine() {
    Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(m_, m_);
    Eigen::VectorXd rhs = rhs_;
    for (int j = 0; j < n_ + m_; ++j) {
      if (is_basic_[j]) continue;
      if (x_[j] == 0.0) continue;
      if (j < n_)
        rhs -= dense_a_.col(j) * x_[j];
      else
        rhs(j - n_) -= x_[j];
    }
    for (int i = 0; i < m_; ++i) {
      const int b = basis_[i];
      if (b < n_) {
        bmat.col(i) = dense_a_.col(b);
      } else if (b < n_ + m_) {
        bmat(b - n_, i) = 1.0;
      } else {
        const auto a = static_cast<std::size_t>(b - n_ - m_);
        bmat(art_row_[a], i) = art_sign_[a];
      }
    }
    if (m_ == 0) return;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
    Eigen::VectorXd xb = lu.solve(rhs);
    if (!xb.allFinite()) return;
    const double err = (bmat * xb - rhs).cwiseAbs().maxCoeff();
    if (err > 1e-7 * (1.0 + rhs.cwiseAbs().maxCoeff())) return;
    for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb(i);
  }

  LpOptions opt_;
  int n_ = 0, m_ = 0, na_ = 0, ncols_ = 0;
  RowMatrix dense_a_;
  Eigen::VectorXd rhs_, cost_;
  RowMatrix tab_;
  Eigen::VectorXd c_, d_;
  std::vector<double> lo_, hi_, x_;
  std::vector<int> basis_;
  std::vector<bool> is_basic_;
  std::vector<int> art_row_;
  std::vector<double> art_sign_;
};

}  // namespace

LpResult solve_lp(const MilpInstance& instance, std::span<const double> lower,
                  std::span<const double> upper, const LpOptions& options) {
  if (lower.size() != instance.column_count() || upper.size() != instance.column_count())
    throw Error(ErrorKind::DimensionMismatch, "bound vectors do not match column count");
  for (std::size_t j = 0; j < lower.size(); ++j)
    if (lower[j] > upper[j]) {
      LpResult r;
      r.status = LpStatus::Infeasible;
      return r;
    }
  Tableau tab(instance, lower, upper, options);
  return tab.run();
}

LpResult solve_lp(const MilpInstance& instance, const LpOptions& options) {
  std::vector<double> lo, hi;
  lo.reserve(instance.column_count());
  hi.reserve(instance.column_count());
  for (const auto& v : instance.variables) {
    lo.push_back(v.lower);
    hi.push_back(v.upper);
  }
  return solve_lp(instance, lo, hi, options);
}

}  // namespace ucsbi
