#include "linear_gaussian.hpp"

#include <cmath>
#include <random>

namespace oracle {

LinearGaussianTask LinearGaussianTask::standard() {
  LinearGaussianTask t;
  t.A << 1.0, 0.5, -0.3, 0.8;
  t.sigma = 0.5;
  return t;
}

void LinearGaussianTask::simulate(Eigen::Index n, ucsbi::Rng& rng, Eigen::MatrixXd& theta,
                                  Eigen::MatrixXd& x) const {
  std::normal_distribution<double> nd(0.0, 1.0);
  theta.resize(n, 2);
  x.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d th(nd(rng), nd(rng));
    const Eigen::Vector2d eps(nd(rng), nd(rng));
    theta.row(i) = th.transpose();
    x.row(i) = (A * th + sigma * eps).transpose();
  }
}

Eigen::Matrix2d LinearGaussianTask::posterior_cov() const {
  return (Eigen::Matrix2d::Identity() + A.transpose() * A / (sigma * sigma)).inverse();
}

Eigen::Vector2d LinearGaussianTask::posterior_mean(const Eigen::Vector2d& x) const {
  return posterior_cov() * A.transpose() * x / (sigma * sigma);
}

GaussianPosterior::GaussianPosterior(LinearGaussianTask task, double cov_scale) : task_(task) {
  cov_ = cov_scale * task_.posterior_cov();
  chol_ = cov_.llt().matrixL();
  prec_ = cov_.inverse();
  log_norm_ = -std::log(2.0 * M_PI) - 0.5 * std::log(cov_.determinant());
}

ucsbi::Mat GaussianPosterior::sample(const ucsbi::Vec& context, ucsbi::Rng& rng, Eigen::Index n) const {
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::Vector2d mu = task_.posterior_mean(context.head<2>());
  ucsbi::Mat out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d z(nd(rng), nd(rng));
    out.row(i) = (mu + chol_ * z).transpose();
  }
  return out;
}

ucsbi::Vec GaussianPosterior::log_prob(const ucsbi::Mat& thetas, const ucsbi::Vec& context) const {
  const Eigen::Vector2d mu = task_.posterior_mean(context.head<2>());
  ucsbi::Vec out(thetas.rows());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
    const Eigen::Vector2d r = thetas.row(i).transpose() - mu;
    out(i) = log_norm_ - 0.5 * r.dot(prec_ * r);
  }
  return out;
}

}  // namespace oracle
