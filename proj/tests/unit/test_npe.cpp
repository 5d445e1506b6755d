#include "ucsbi/errors.hpp"
#include "ucsbi/npe.hpp"

#include "linear_gaussian.hpp"
#include "scratch_dir.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace ucsbi;

namespace {

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = 6;
  c.batch_size = 64;
  c.hidden_layers = 2;
  c.hidden_units = 16;
  c.transforms = 2;
  c.seed = seed;
  return c;
}

struct ToyData {
  Mat theta, x, val_theta, val_x;
};

ToyData toy(Eigen::Index n, std::uint64_t seed) {
  const auto task = oracle::LinearGaussianTask::standard();
  ToyData d;
  Rng rng(seed);
  task.simulate(n, rng, d.theta, d.x);
  task.simulate(n / 2, rng, d.val_theta, d.val_x);
  return d;
}

// Textbook Adam, written out per coordinate.
struct ReferenceAdam {
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
    if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      p[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
};

}  // namespace

TEST_CASE("identity flow loss at the standardized origin") {
  FlowSpec s;
  s.theta_dim = 9;
  s.context_dim = 3;
  s.hidden_units = 8;
  FlowModel m = FlowModel::create(s, 1);
  m.theta_standardizer.mean = Vec::LinSpaced(9, 10.0, 30.0);
  m.theta_standardizer.scale = Vec::LinSpaced(9, 1.0, 5.0);
  m.context_standardizer = Standardizer::identity(3);
  const Mat thetas = m.theta_standardizer.mean.transpose().replicate(5, 1);
  const Mat ctx = Mat::Random(5, 3);
  const double expected = 4.5 * std::log(2.0 * std::numbers::pi) + m.theta_standardizer.scale.array().log().sum();
  CHECK(nll_loss(m, thetas, ctx) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(4.5 * std::log(2.0 * std::numbers::pi) == doctest::Approx(8.2704).epsilon(1e-4));
}

TEST_CASE("duplicating a batch leaves the loss unchanged") {
  const ToyData d = toy(200, 3);
  const TrainResult r = train(d.theta, d.x, d.val_theta, d.val_x, small_config(4));
  const Mat th = d.theta.topRows(37), x = d.x.topRows(37);
  Mat th2(74, 2), x2(74, 2);
  th2 << th, th;
  x2 << x, x;
  CHECK(nll_loss(r.model, th2, x2) == doctest::Approx(nll_loss(r.model, th, x)).epsilon(1e-13));
}

TEST_CASE("first Adam step moves each parameter by the learning rate") {
  TrainConfig c;
  Vec p = Vec::LinSpaced(5, -1.0, 1.0);
  const Vec p0 = p;
  AdamState st;
  adam_step(p, Vec::Ones(5), st, c);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs((p(i) - p0(i)) + 0.001) < 1e-6);
}

TEST_CASE("zero gradients are a fixed point") {
  TrainConfig c;
  Vec p = Vec::LinSpaced(4, 0.0, 3.0);
  const Vec p0 = p;
  AdamState st;
  for (int k = 0; k < 100; ++k) adam_step(p, Vec::Zero(4), st, c);
  CHECK(p == p0);
}

TEST_CASE("Adam matches the reference update and is elementwise") {
  TrainConfig c;
  c.learning_rate = 0.01;
  Rng rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec p(6);
  p << 0.3, 0.3, -2.0, 1.0, 0.0, 5.0;
  std::vector<double> q(p.data(), p.data() + 6);
  AdamState st;
  ReferenceAdam ref;
  for (int k = 0; k < 50; ++k) {
    Vec g(6);
    for (int i = 0; i < 6; ++i) g(i) = nd(rng);
    g(1) = g(0);  // identical histories for the first two parameters
    adam_step(p, g, st, c);
    ref.step(q, std::vector<double>(g.data(), g.data() + 6), c.learning_rate);
    CHECK(p(0) == p(1));
  }
  for (int i = 0; i < 6; ++i) CHECK(p(i) == doctest::Approx(q[static_cast<std::size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("full-set loss equals the mean of even batch losses") {
  const ToyData d = toy(256, 6);
  const TrainResult r = train(d.theta, d.x, d.val_theta, d.val_x, small_config(7));
  const double full = nll_loss(r.model, d.theta, d.x);
  double sum = 0.0;
  for (int b = 0; b < 4; ++b) sum += nll_loss(r.model, d.theta.middleRows(b * 64, 64), d.x.middleRows(b * 64, 64));
  CHECK(std::abs(full - sum / 4.0) < 1e-10);
}

TEST_CASE("training is deterministic for a seed") {
  const ToyData d = toy(300, 8);
  const TrainResult a = train(d.theta, d.x, d.val_theta, d.val_x, small_config(9));
  const TrainResult b = train(d.theta, d.x, d.val_theta, d.val_x, small_config(9));
  CHECK(a.model == b.model);
  CHECK(a.curve.val_nll == b.curve.val_nll);
  CHECK(a.curve.train_nll == b.curve.train_nll);
  const TrainResult c = train(d.theta, d.x, d.val_theta, d.val_x, small_config(10));
  CHECK_FALSE(a.model == c.model);
  oracle::ScratchDir dir;
  train(d.theta, d.x, d.val_theta, d.val_x, small_config(9), dir.file("a.flow"));
  train(d.theta, d.x, d.val_theta, d.val_x, small_config(9), dir.file("b.flow"));
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir.file("a.flow")) == slurp(dir.file("b.flow")));
  CHECK(load_flow(dir.file("a.flow")) == a.model);
}

TEST_CASE("the selected epoch minimizes validation loss") {
  const ToyData d = toy(400, 11);
  TrainConfig c = small_config(12);
  c.epochs = 12;
  const TrainResult r = train(d.theta, d.x, d.val_theta, d.val_x, c);
  REQUIRE(r.curve.val_nll.size() == 12);
  REQUIRE(r.curve.train_nll.size() == 12);
  const auto sel = static_cast<std::size_t>(r.curve.selected);
  for (double v : r.curve.val_nll) CHECK(r.curve.val_nll[sel] <= v);
  CHECK(r.curve.val_nll[sel] <= r.curve.val_nll[0]);
  // The returned snapshot is the one that scored the selected loss.
  CHECK(nll_loss(r.model, d.val_theta, d.val_x) == doctest::Approx(r.curve.val_nll[sel]).epsilon(1e-10));
}

TEST_CASE("standardizers come from the training split only") {
  ToyData d = toy(200, 13);
  d.val_theta.array() += 100.0;
  d.val_x.array() *= 50.0;
  const TrainResult r = train(d.theta, d.x, d.val_theta, d.val_x, small_config(14));
  CHECK(r.model.theta_standardizer == Standardizer::fit(d.theta));
  CHECK(r.model.context_standardizer == Standardizer::fit(d.x));
}

TEST_CASE("loss falls over training on the toy task") {
  const ToyData d = toy(2048, 15);
  TrainConfig c = small_config(16);
  c.epochs = 40;
  c.batch_size = 128;
  c.hidden_units = 32;
  const TrainResult r = train(d.theta, d.x, d.val_theta, d.val_x, c);
  // Five-epoch moving averages never rise.
  auto avg = [&](std::size_t e) {
    double s = 0.0;
    for (std::size_t k = e; k < e + 5; ++k) s += r.curve.train_nll[k];
    return s / 5.0;
  };
  for (std::size_t e = 5; e + 5 <= 40; e += 5) CHECK(avg(e) <= avg(e - 5) + 1e-9);
  // The best attainable loss is the posterior entropy; the prior's is 2.84.
  const double entropy = std::log(2.0 * std::numbers::pi * std::exp(1.0)) +
                         0.5 * std::log(oracle::LinearGaussianTask::standard().posterior_cov().determinant());
  const double best = r.curve.val_nll[static_cast<std::size_t>(r.curve.selected)];
  CHECK(best < entropy + 0.1);
  CHECK(best < r.curve.val_nll[0]);
}

TEST_CASE("learning curve CSV") {
  LearningCurve c;
  c.train_nll = {2.0, 1.5, 1.25};
  c.val_nll = {2.1, 1.4, 1.45};
  c.selected = 1;
  oracle::ScratchDir dir;
  write_learning_curve_csv(dir.file("lc.csv"), c);
  std::ifstream in(dir.file("lc.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_nll,val_nll,selected");
  std::getline(in, line);
  CHECK(line == "1,2,2.1000000000000001,0");
  std::getline(in, line);
  CHECK(line == "2,1.5,1.3999999999999999,1");
  std::getline(in, line);
  CHECK(line.substr(0, 5) == "3,1.2");
  CHECK(line.back() == '0');
}

TEST_CASE("divergent training raises NonFiniteLoss") {
  const ToyData d = toy(256, 17);
  TrainConfig c = small_config(18);
  c.learning_rate = 1e300;
  oracle::ScratchDir dir;
  try {
    train(d.theta, d.x, d.val_theta, d.val_x, c, dir.file("m.flow"));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteLoss);
  }
}

TEST_CASE("train and validation sets must share a config") {
  Dataset a, b;
  a.manifest.config_hash = "aaaa";
  b.manifest.config_hash = "bbbb";
  try {
    train_on_datasets(a, b, small_config(1));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigHashMismatch);
  }
}

TEST_CASE("bad training inputs are rejected") {
  const ToyData d = toy(100, 19);
  TrainConfig c = small_config(20);
  c.batch_size = 1000;
  CHECK_THROWS_AS(train(d.theta, d.x, d.val_theta, d.val_x, c), Error);
  Mat bad = d.theta;
  bad(3, 1) = std::nan("");
  CHECK_THROWS_AS(train(bad, d.x, d.val_theta, d.val_x, small_config(20)), Error);
}
