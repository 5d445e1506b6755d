#include "ucsbi/errors.hpp"
#include "ucsbi/flows.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace ucsbi;

namespace {

FlowSpec small_spec(int d, int C, FlowKind kind = FlowKind::MAF) {
  FlowSpec s;
  s.kind = kind;
  s.theta_dim = d;
  s.context_dim = C;
  s.hidden_units = 16;
  s.hidden_layers = 2;
  return s;
}

FlowModel random_model(const FlowSpec& spec, std::uint64_t seed, double sigma = 0.3) {
  FlowModel m = FlowModel::create(spec, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, sigma);
  for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params().values()(i) = n(rng);
  return m;
}

Mat random_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat x(n, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < d; ++c) x(r, c) = g(rng);
  return x;
}

double mean_log_prob_std(const FlowModel& m, const Mat& u, const Mat& c) {
  const FlowModel::BaseImage b = m.to_base(u, c);
  const double d = static_cast<double>(u.cols());
  return (-0.5 * b.z.rowwise().squaredNorm().array() - 0.5 * d * std::log(2.0 * M_PI) + b.logdet.array()).mean();
}

}  // namespace

TEST_CASE("identity flow reproduces the standard normal density") {
  const FlowModel m = FlowModel::create(small_spec(2, 0), 1);
  const Vec lp = m.log_prob(Mat::Zero(1, 2), Mat::Zero(1, 0));
  CHECK(std::abs(lp(0) - (-std::log(2.0 * M_PI))) < 1e-9);
  const Mat u = random_rows(5, 2, 3);
  const FlowModel::BaseImage b = m.to_base(u, Mat::Zero(5, 0));
  CHECK((b.z - u).norm() == 0.0);
  CHECK(b.logdet.isZero());
}

TEST_CASE("zero conditioner gives zero shift and log-scale") {
  FlowModel m = FlowModel::create(small_spec(3, 2), 5);
  m.params().values().setZero();
  const Mat p = m.made_forward(0, random_rows(4, 3, 1), random_rows(4, 2, 2));
  CHECK(p.isZero());
  CHECK(p.cols() == 6);
}

TEST_CASE("conditioner is autoregressive") {
  for (FlowKind kind : {FlowKind::MAF, FlowKind::NSF}) {
    const FlowSpec spec = small_spec(4, 3, kind);
    const FlowModel m = random_model(spec, 11);
    const Mat u = random_rows(1, 4, 4), c = random_rows(1, 3, 5);
    for (int k = 0; k < spec.transforms; ++k) {
      const Mat base = m.made_forward(k, u, c);
      for (int in = 0; in < 4; ++in) {
        Mat up = u;
        up(0, in) += 0.37;
        const Mat moved = m.made_forward(k, up, c);
        for (Eigen::Index col = 0; col < base.cols(); ++col) {
          const int dim = conditioner_dim_of_column(spec, static_cast<int>(col));
          if (dim <= in) CHECK(moved(0, col) == base(0, col));
        }
      }
    }
    // Finite-difference Jacobian: outputs of dimension i depend on some earlier input.
    const Mat base = m.made_forward(1, u, c);
    bool some_dependency = false;
    for (Eigen::Index col = 0; col < base.cols(); ++col) {
      const int dim = conditioner_dim_of_column(spec, static_cast<int>(col));
      for (int in = 0; in < dim; ++in) {
        Mat up = u, dn = u;
        up(0, in) += 1e-6;
        dn(0, in) -= 1e-6;
        some_dependency |= std::abs(m.made_forward(1, up, c)(0, col) - m.made_forward(1, dn, c)(0, col)) > 0;
      }
    }
    CHECK(some_dependency);
  }
}

TEST_CASE("masks follow the degree rules") {
  const FlowModel m = FlowModel::create(small_spec(3, 0), 1);
  const Mat& first = m.mask(0, 0);
  CHECK(first.rows() == 3);
  // Dimension 3 (degree 3) feeds no hidden unit: hidden degrees are 1..d-1.
  CHECK(first.row(2).isZero());
  const Mat& out = m.mask(0, m.layer_count() - 1);
  // Outputs for dimension 0 see nothing.
  CHECK(out.col(0).isZero());
  CHECK(out.col(3).isZero());
}

TEST_CASE("flows invert within 1e-6 per coordinate") {
  for (FlowKind kind : {FlowKind::MAF, FlowKind::NSF}) {
    const FlowSpec spec = small_spec(3, 2, kind);
    const FlowModel m = random_model(spec, 21);
    const Mat z = random_rows(1000, 3, 7), c = random_rows(1000, 2, 8);
    const Mat u = m.from_base(z, c);
    const Mat back = m.to_base(u, c).z;
    CHECK((back - z).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("log_prob is base density plus log-determinants") {
  const FlowSpec spec = small_spec(2, 1);
  FlowModel m = random_model(spec, 4);
  m.theta_standardizer.mean = Vec::Constant(2, 3.0);
  m.theta_standardizer.scale = (Vec(2) << 2.0, 0.5).finished();
  const Mat th = random_rows(6, 2, 1).array() + 3.0, c = random_rows(6, 1, 2);
  const Vec lp = m.log_prob(th, c);
  const FlowModel::BaseImage b = m.to_base(m.theta_standardizer.apply(th), c);
  const Vec again = (-0.5 * b.z.rowwise().squaredNorm().array() - std::log(2.0 * M_PI) + b.logdet.array()).matrix();
  CHECK((lp - (again.array() - std::log(2.0 * 0.5)).matrix()).norm() < 1e-12);
  CHECK_THROWS_AS(m.log_prob(Mat::Constant(1, 2, NAN), Mat::Zero(1, 1)), Error);
}

TEST_CASE("density integrates to one") {
  for (FlowKind kind : {FlowKind::MAF, FlowKind::NSF}) {
    const FlowModel m = random_model(small_spec(2, 1, kind), 33, 0.25);
    const Mat ctx = Mat::Constant(1, 1, 0.4);
    const int n = 401;
    const double lo = -9.0, hi = 9.0, h = (hi - lo) / (n - 1);
    Mat grid(n * n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        grid(i * n + j, 0) = lo + h * i;
        grid(i * n + j, 1) = lo + h * j;
      }
    const Vec p = m.log_prob(grid, ctx).array().exp();
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0, wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        total += wi * wj * p(i * n + j);
      }
    total *= h * h;
    CHECK(total > 0.97);
    CHECK(total < 1.01);

    // Mass of a sub-box around the bulk: quadrature vs Monte Carlo.
    Rng rng(9);
    const Mat s = m.sample(ctx.row(0).transpose(), rng, 100000);
    auto quantile = [&](int col, double q) {
      std::vector<double> v(s.col(col).data(), s.col(col).data() + s.rows());
      std::nth_element(v.begin(), v.begin() + static_cast<long>(q * v.size()), v.end());
      return v[static_cast<std::size_t>(q * v.size())];
    };
    const double a0 = quantile(0, 0.2), b0 = quantile(0, 0.8), a1 = quantile(1, 0.2), b1 = quantile(1, 0.8);
    const double frac = ((s.col(0).array() > a0) && (s.col(0).array() < b0) && (s.col(1).array() > a1) &&
                         (s.col(1).array() < b1)).cast<double>().mean();
    double box = 0.0;
    const int m2 = 201;
    const double h0 = (b0 - a0) / (m2 - 1), h1 = (b1 - a1) / (m2 - 1);
    Mat g2(m2 * m2, 2);
    for (int i = 0; i < m2; ++i)
      for (int j = 0; j < m2; ++j) {
        g2(i * m2 + j, 0) = a0 + h0 * i;
        g2(i * m2 + j, 1) = a1 + h1 * j;
      }
    const Vec p2 = m.log_prob(g2, ctx).array().exp();
    for (int i = 0; i < m2; ++i)
      for (int j = 0; j < m2; ++j)
        box += ((i == 0 || i == m2 - 1) ? 0.5 : 1.0) * ((j == 0 || j == m2 - 1) ? 0.5 : 1.0) * p2(i * m2 + j);
    box *= h0 * h1;
    // Monte-Carlo standard error is below 0.0016 at 1e5 draws.
    CHECK(frac > 0.1);
    CHECK(std::abs(box - frac) < 0.02 * frac + 0.005);
  }
}

TEST_CASE("identity flow samples are destandardized normal draws") {
  FlowModel m = FlowModel::create(small_spec(2, 1), 2);
  m.theta_standardizer.mean = (Vec(2) << 10.0, -4.0).finished();
  m.theta_standardizer.scale = (Vec(2) << 3.0, 0.5).finished();
  Rng a(77), b(77);
  const Mat s = m.sample(Vec::Zero(1), a, 4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int r = 0; r < 4; ++r) {
    const double z0 = n(b), z1 = n(b);
    CHECK(s(r, 0) == doctest::Approx(10.0 + 3.0 * z0).epsilon(1e-14));
    CHECK(s(r, 1) == doctest::Approx(-4.0 + 0.5 * z1).epsilon(1e-14));
  }
  CHECK(m.log_prob(s, Mat::Zero(1, 1)).allFinite());
}

TEST_CASE("analytic gradient of the first shift bias") {
  const FlowSpec spec = small_spec(3, 0);
  FlowModel m = FlowModel::create(spec, 3);
  m.params().values().setZero();
  const Mat u = (Mat(1, 3) << 0.7, -1.2, 0.4).finished();
  Vec g;
  nll_and_grad_std(m, u, Mat::Zero(1, 0), g, false);
  const Vec glp = -g;
  // Bias of mu_0 in the last layer of each transform; two reversals restore the order.
  const double expected[] = {u(0, 0), u(0, 2), u(0, 0)};
  for (int k = 0; k < 3; ++k) {
    const std::string name = "t" + std::to_string(k) + ".l" + std::to_string(spec.hidden_layers) + ".b";
    for (const auto& slot : m.params().slots())
      if (slot.name == name) CHECK(glp(slot.offset) == doctest::Approx(expected[k]).epsilon(1e-12));
  }
}

TEST_CASE("gradients match central finite differences") {
  for (FlowKind kind : {FlowKind::MAF, FlowKind::NSF}) {
    const FlowSpec spec = small_spec(3, 2, kind);
    FlowModel m = random_model(spec, 8, 0.4);
    const Mat u = random_rows(8, 3, 5), c = random_rows(8, 2, 6);
    Vec g;
    nll_and_grad_std(m, u, c, g, false);
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<Eigen::Index> pick(0, m.params().size() - 1);
    int checked = 0;
    for (int rep = 0; rep < 80; ++rep) {
      const Eigen::Index i = pick(rng);
      const double x0 = m.params().values()(i), h = 1e-6;
      m.params().values()(i) = x0 + h;
      const double fp = -mean_log_prob_std(m, u, c);
      m.params().values()(i) = x0 - h;
      const double fm = -mean_log_prob_std(m, u, c);
      m.params().values()(i) = x0;
      const double fd = (fp - fm) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(g(i)));
      if (scale < 1e-10) continue;
      CHECK(std::abs(fd - g(i)) / scale < 1e-4);
      ++checked;
    }
    CHECK(checked >= 20);
  }
}

TEST_CASE("masked-out weights receive zero gradient") {
  const FlowSpec spec = small_spec(3, 1);
  const FlowModel m = random_model(spec, 2);
  Vec g;
  nll_and_grad_std(m, random_rows(5, 3, 1), random_rows(5, 1, 2), g, false);
  for (const auto& slot : m.params().slots()) {
    if (slot.name != "t0.l0.W") continue;
    const Mat& mask = m.mask(0, 0);
    for (Eigen::Index c = 0; c < slot.cols; ++c)
      for (Eigen::Index r = 0; r < slot.rows; ++r)
        if (mask(r, c) == 0.0) CHECK(g(slot.offset + c * slot.rows + r) == 0.0);
  }
}

TEST_CASE("parallel gradient matches the serial reference") {
  const FlowSpec spec = small_spec(3, 4);
  const FlowModel m = random_model(spec, 5);
  const Mat u = random_rows(300, 3, 1), c = random_rows(300, 4, 2);
  Vec gs, gp, gp2;
  const double ls = nll_and_grad_std(m, u, c, gs, false);
  const double lp = nll_and_grad_std(m, u, c, gp, true);
  nll_and_grad_std(m, u, c, gp2, true);
  CHECK(std::abs(ls - lp) < 1e-12 * std::max(1.0, std::abs(ls)));
  CHECK((gs - gp).norm() <= 1e-10 * std::max(1.0, gs.norm()));
  CHECK(gp == gp2);
}

TEST_CASE("spline identity, tails and derivative") {
  const int K = 8;
  const double B = 5.0;
  std::vector<double> zero(3 * K - 1, 0.0);
  for (double x : {-4.9, -1.0, 0.0, 0.3, 2.5, 4.99}) {
    const SplineResult r = rq_spline_forward(x, zero.data(), K, B);
    CHECK(r.y == doctest::Approx(x).epsilon(1e-12));
    CHECK(std::abs(r.logdet) < 1e-12);
  }
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> raw(3 * K - 1);
  for (double& v : raw) v = n(rng);
  for (double x : {-7.0, 5.5, 12.0}) {
    const SplineResult r = rq_spline_forward(x, raw.data(), K, B);
    CHECK(r.y == x);
    CHECK(r.logdet == 0.0);
  }
  std::uniform_real_distribution<double> ux(-4.99, 4.99);
  double prev_y = -1e9;
  for (int rep = 0; rep < 100; ++rep) {
    const double x = ux(rng), h = 1e-6;
    const SplineResult r = rq_spline_forward(x, raw.data(), K, B);
    const double fd = (rq_spline_forward(x + h, raw.data(), K, B).y - rq_spline_forward(x - h, raw.data(), K, B).y) / (2 * h);
    CHECK(std::abs(std::exp(r.logdet) - fd) / fd < 1e-5);
    CHECK(std::abs(rq_spline_inverse(r.y, raw.data(), K, B) - x) < 1e-9);
    const auto J = rq_spline_jacobian(x, raw.data(), K, B);
    CHECK(J(0, 0) == doctest::Approx(std::exp(r.logdet)).epsilon(1e-9));
    (void)prev_y;
  }
  // Monotone on a sorted grid.
  double last = -B - 1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double y = rq_spline_forward(-B + 2.0 * B * i / 1000.0, raw.data(), K, B).y;
    CHECK(y > last);
    last = y;
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (FlowKind kind : {FlowKind::MAF, FlowKind::NSF}) {
    FlowModel m = random_model(small_spec(3, 2, kind), 17);
    m.theta_standardizer.mean = (Vec(3) << 1.0 / 3.0, 2, 3).finished();
    m.context_standardizer.scale = (Vec(2) << 0.1, 7).finished();
    m.context_standardizer.clip = 4.5;
    const auto path = (std::filesystem::temp_directory_path() / "ucsbi_flow_rt.bin").string();
    save_flow(path, m);
    const FlowModel back = load_flow(path);
    CHECK(back == m);

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    try {
      load_flow(path);
      FAIL("expected CorruptFile");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CorruptFile);
    }
    std::ofstream(path, std::ios::binary) << "not a model";
    CHECK_THROWS_AS(load_flow(path), Error);
    std::filesystem::remove(path);
  }
}

TEST_CASE("standardizer fit") {
  Mat x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s = Standardizer::fit(x);
  CHECK(s.mean(0) == doctest::Approx(2.5));
  CHECK(s.scale(0) == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.scale(1) == 1.0);  // constant column
  CHECK((s.invert(s.apply(x)) - x).norm() < 1e-12);
}

TEST_CASE("standardizer clip bounds only the outliers") {
  Standardizer s = Standardizer::identity(2);
  s.clip = 2.0;
  Mat x(3, 2);
  x << 0.5, -1.5, 7.0, -9.0, -2.0, 2.0;
  const Mat z = s.apply(x);
  CHECK(z(0, 0) == 0.5);
  CHECK(z(0, 1) == -1.5);
  CHECK(z(1, 0) == 2.0);
  CHECK(z(1, 1) == -2.0);
  CHECK(z(2, 0) == -2.0);

  // a context far outside the training range behaves like one on the bound
  FlowModel m = random_model(small_spec(2, 2, FlowKind::MAF), 5);
  m.context_standardizer = s;
  const Mat th = Mat::Constant(1, 2, 0.3);
  const Mat far = (Mat(1, 2) << 1e6, 0.0).finished(), edge = (Mat(1, 2) << 2.0, 0.0).finished();
  CHECK(m.log_prob(th, far)(0) == m.log_prob(th, edge)(0));
}
