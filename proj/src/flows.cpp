#include "ucsbi/flows.hpp"

#include "ucsbi/errors.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace ucsbi {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr double kMinBin = 1e-3;
constexpr double kMinDerivative = 1e-3;

}  // namespace

const char* to_string(FlowKind k) { return k == FlowKind::MAF ? "maf" : "nsf"; }

FlowKind flow_kind_from_string(const std::string& s) {
  if (s == "maf" || s == "MAF") return FlowKind::MAF;
  if (s == "nsf" || s == "NSF") return FlowKind::NSF;
  throw Error(ErrorKind::InvalidConfig, "unknown flow kind '" + s + "'");
}

bool nsf_available() {
#ifdef UCSBI_WITH_NSF
  return true;
#else
  return false;
#endif
}

// ---------------------------------------------------------------- standardizer

Standardizer Standardizer::identity(Eigen::Index n) { return {Vec::Zero(n), Vec::Ones(n)}; }

Standardizer Standardizer::fit(const Mat& rows) {
  Standardizer s = identity(rows.cols());
  if (rows.rows() == 0) return s;
  s.mean = rows.colwise().mean().transpose();
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double var = (rows.col(j).array() - s.mean(j)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(j) = (std::isfinite(sd) && sd > 1e-12 * (1.0 + std::abs(s.mean(j)))) ? sd : 1.0;
  }
  return s;
}

Mat Standardizer::apply(const Mat& rows) const {
  Mat z = (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  if (clip > 0.0) z = z.array().max(-clip).min(clip).matrix();
  return z;
}

Mat Standardizer::invert(const Mat& rows) const {
  return (rows.array().rowwise() * scale.transpose().array()).rowwise() + mean.transpose().array();
}

// ---------------------------------------------------------------- spline

namespace {

template <class S>
S softplus(const S& x) {
  using std::exp;
  using std::log;
  // log(1 + e^x) without overflow for large x.
  if (x > 20.0) return x;
  return log(1.0 + exp(x));
}

template <class S>
struct Knots {
  std::vector<S> cw, ch, d;  // K+1 cumulative widths / heights, K+1 derivatives
};

template <class S>
Knots<S> make_knots(const S* w, const S* h, const S* dr, int K, double B) {
  using std::exp;
  Knots<S> k;
  auto cumulate = [&](const S* raw, std::vector<S>& out, double min_bin) {
    S mx = raw[0];
    for (int i = 1; i < K; ++i)
      if (raw[i] > mx) mx = raw[i];
    std::vector<S> e(static_cast<std::size_t>(K));
    S sum = S(0.0);
    for (int i = 0; i < K; ++i) {
      e[static_cast<std::size_t>(i)] = exp(raw[i] - mx);
      sum += e[static_cast<std::size_t>(i)];
    }
    out.assign(static_cast<std::size_t>(K + 1), S(0.0));
    out[0] = S(-B);
    S acc = S(0.0);
    for (int i = 0; i < K; ++i) {
      acc += min_bin + (1.0 - min_bin * K) * (e[static_cast<std::size_t>(i)] / sum);
      out[static_cast<std::size_t>(i + 1)] = 2.0 * B * acc - B;
    }
    out[static_cast<std::size_t>(K)] = S(B);
  };
  cumulate(w, k.cw, kMinBin);
  cumulate(h, k.ch, kMinBin);
  // softplus(0 + c) = 1 - kMinDerivative, so zero raw derivatives give slope 1.
  const double shift = std::log(std::exp(1.0 - kMinDerivative) - 1.0);
  k.d.assign(static_cast<std::size_t>(K + 1), S(1.0));
  for (int i = 1; i < K; ++i) k.d[static_cast<std::size_t>(i)] = kMinDerivative + softplus(S(dr[i - 1] + shift));
  return k;
}

template <class S>
void spline_eval(const S& x, const S* w, const S* h, const S* dr, int K, double B, S& y, S& logdet) {
  using std::log;
  if (x < -B || x > B) {
    y = x;
    logdet = S(0.0);
    return;
  }
  const Knots<S> k = make_knots(w, h, dr, K, B);
  int bin = 0;
  while (bin < K - 1 && x >= k.cw[static_cast<std::size_t>(bin + 1)]) ++bin;
  const auto b = static_cast<std::size_t>(bin);
  const S wk = k.cw[b + 1] - k.cw[b];
  const S hk = k.ch[b + 1] - k.ch[b];
  const S sk = hk / wk;
  const S xi = (x - k.cw[b]) / wk;
  const S xi1 = xi * (1.0 - xi);
  const S num = hk * (sk * xi * xi + k.d[b] * xi1);
  const S den = sk + (k.d[b + 1] + k.d[b] - 2.0 * sk) * xi1;
  y = k.ch[b] + num / den;
  const S dnum = sk * sk * (k.d[b + 1] * xi * xi + 2.0 * sk * xi1 + k.d[b] * (1.0 - xi) * (1.0 - xi));
  logdet = log(dnum) - 2.0 * log(den);
}

}  // namespace

SplineResult rq_spline_forward(double x, const double* raw, int bins, double tail_bound) {
  SplineResult r{};
  spline_eval<double>(x, raw, raw + bins, raw + 2 * bins, bins, tail_bound, r.y, r.logdet);
  return r;
}

double rq_spline_inverse(double y, const double* raw, int K, double B) {
  if (y < -B || y > B) return y;
  const Knots<double> k = make_knots<double>(raw, raw + K, raw + 2 * K, K, B);
  int bin = 0;
  while (bin < K - 1 && y >= k.ch[static_cast<std::size_t>(bin + 1)]) ++bin;
  const auto b = static_cast<std::size_t>(bin);
  const double wk = k.cw[b + 1] - k.cw[b];
  const double hk = k.ch[b + 1] - k.ch[b];
  const double sk = hk / wk;
  const double dy = y - k.ch[b];
  const double mix = k.d[b + 1] + k.d[b] - 2.0 * sk;
  const double a = hk * (sk - k.d[b]) + dy * mix;
  const double bb = hk * k.d[b] - dy * mix;
  const double c = -sk * dy;
  const double disc = std::max(0.0, bb * bb - 4.0 * a * c);
  const double xi = (2.0 * c) / (-bb - std::sqrt(disc));
  return k.cw[b] + xi * wk;
}

Eigen::Matrix<double, 2, Eigen::Dynamic> rq_spline_jacobian(double x, const double* raw, int K, double B) {
  using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
  const int n = 3 * K;  // x plus 3K - 1 raw parameters
  AD ax(x, n, 0);
  std::vector<AD> p(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) p[static_cast<std::size_t>(i)] = AD(raw[i], n, i + 1);
  AD y, ld;
  spline_eval<AD>(ax, p.data(), p.data() + K, p.data() + 2 * K, K, B, y, ld);
  Eigen::Matrix<double, 2, Eigen::Dynamic> J(2, n);
  J.setZero();
  if (y.derivatives().size() == n) J.row(0) = y.derivatives().transpose();
  else J(0, 0) = 1.0;  // identity tail
  if (ld.derivatives().size() == n) J.row(1) = ld.derivatives().transpose();
  return J;
}

// ---------------------------------------------------------------- model

int conditioner_dim_of_column(const FlowSpec& spec, int col) {
  const int d = spec.theta_dim;
  if (spec.kind == FlowKind::MAF) return col % d;
  const int K = spec.bins;
  if (col < d * K) return col / K;
  if (col < 2 * d * K) return (col - d * K) / K;
  return (col - 2 * d * K) / (K - 1);
}

void FlowModel::build_structure() {
  const int d = spec_.theta_dim, H = spec_.hidden_units, L = spec_.hidden_layers;
  const int out = spec_.params_per_dim() * d;
  std::vector<int> deg_in(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) deg_in[static_cast<std::size_t>(i)] = i + 1;
  std::vector<int> deg_h(static_cast<std::size_t>(H));
  for (int k = 0; k < H; ++k) deg_h[static_cast<std::size_t>(k)] = k % std::max(1, d - 1) + 1;
  std::vector<int> deg_out(static_cast<std::size_t>(out));
  for (int c = 0; c < out; ++c) deg_out[static_cast<std::size_t>(c)] = conditioner_dim_of_column(spec_, c) + 1;

  transforms_.assign(static_cast<std::size_t>(spec_.transforms), Transform{});
  for (int k = 0; k < spec_.transforms; ++k) {
    Transform& tr = transforms_[static_cast<std::size_t>(k)];
    for (int l = 0; l <= L; ++l) {
      const bool first = l == 0, last = l == L;
      const std::vector<int>& from = first ? deg_in : deg_h;
      const std::vector<int>& to = last ? deg_out : deg_h;
      Layer layer;
      const std::string tag = "t" + std::to_string(k) + ".l" + std::to_string(l);
      const auto rows = static_cast<Eigen::Index>(from.size()), cols = static_cast<Eigen::Index>(to.size());
      layer.w_slot = params_.add(tag + ".W", rows, cols);
      if (spec_.context_dim > 0) layer.v_slot = params_.add(tag + ".V", spec_.context_dim, cols);
      layer.b_slot = params_.add(tag + ".b", 1, cols);
      layer.mask.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          const int a = from[static_cast<std::size_t>(r)], b = to[static_cast<std::size_t>(c)];
          layer.mask(r, c) = (last ? b > a : b >= a) ? 1.0 : 0.0;
        }
      tr.layers.push_back(std::move(layer));
    }
  }
}

FlowModel FlowModel::create(const FlowSpec& spec, std::uint64_t init_seed) {
  if (spec.theta_dim < 1 || spec.context_dim < 0 || spec.transforms < 1 || spec.hidden_layers < 0 ||
      spec.hidden_units < 1)
    throw Error(ErrorKind::InvalidConfig, "invalid flow dimensions");
  if (spec.kind == FlowKind::NSF) {
    if (!nsf_available()) throw Error(ErrorKind::InvalidConfig, "spline flows were not built (UCSBI_WITH_NSF=OFF)");
    if (spec.bins < 2 || !(spec.tail_bound > 0.0)) throw Error(ErrorKind::InvalidConfig, "invalid spline settings");
  }
  FlowModel m;
  m.spec_ = spec;
  m.theta_standardizer = Standardizer::identity(spec.theta_dim);
  m.context_standardizer = Standardizer::identity(spec.context_dim);
  m.build_structure();

  Rng rng = substream(init_seed, {0x666c6f77});
  for (const auto& tr : m.transforms_) {
    for (std::size_t l = 0; l < tr.layers.size(); ++l) {
      const Layer& layer = tr.layers[l];
      if (l + 1 == tr.layers.size()) continue;  // final layer stays zero
      const auto W = m.params_.view(layer.w_slot);
      const double fan_in = static_cast<double>(W.rows() + spec.context_dim);
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (int slot : {layer.w_slot, layer.v_slot, layer.b_slot}) {
        if (slot < 0) continue;
        auto P = m.params_.view(slot);
        for (Eigen::Index c = 0; c < P.cols(); ++c)
          for (Eigen::Index r = 0; r < P.rows(); ++r) P(r, c) = u(rng);
      }
    }
  }
  return m;
}

bool FlowModel::operator==(const FlowModel& o) const {
  const FlowSpec& a = spec_;
  const FlowSpec& b = o.spec_;
  return a.kind == b.kind && a.theta_dim == b.theta_dim && a.context_dim == b.context_dim &&
         a.transforms == b.transforms && a.hidden_layers == b.hidden_layers && a.hidden_units == b.hidden_units &&
         a.bins == b.bins && a.tail_bound == b.tail_bound && a.log_scale_clamp == b.log_scale_clamp &&
         theta_standardizer == o.theta_standardizer && context_standardizer == o.context_standardizer &&
         data_hash == o.data_hash && params_.values() == o.params_.values();
}

Mat FlowModel::conditioner_raw(int k, const Mat& u, const Mat& c) const {
  const Transform& tr = transforms_[static_cast<std::size_t>(k)];
  Mat h = u;
  for (std::size_t l = 0; l < tr.layers.size(); ++l) {
    const Layer& layer = tr.layers[l];
    Mat a = h * params_.view(layer.w_slot).cwiseProduct(layer.mask);
    if (layer.v_slot >= 0) a.noalias() += c * params_.view(layer.v_slot);
    a.rowwise() += params_.view(layer.b_slot).row(0);
    h = l + 1 < tr.layers.size() ? Mat(a.cwiseMax(0.0)) : a;
  }
  return h;
}

Mat FlowModel::made_forward(int k, const Mat& u, const Mat& c) const {
  if (u.cols() != spec_.theta_dim || c.cols() != spec_.context_dim || u.rows() != c.rows())
    throw Error(ErrorKind::DimensionMismatch, "conditioner input shapes do not match the flow");
  Mat p = conditioner_raw(k, u, c);
  if (spec_.kind == FlowKind::MAF) {
    const double L = spec_.log_scale_clamp;
    p.rightCols(spec_.theta_dim) = p.rightCols(spec_.theta_dim).cwiseMax(-L).cwiseMin(L);
  }
  return p;
}

namespace {

// Raw spline parameters of dimension i for one row, gathered in [w | h | d] order.
void gather_spline(const Mat& p, Eigen::Index row, int i, int d, int K, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(3 * K - 1));
  for (int b = 0; b < K; ++b) {
    out[static_cast<std::size_t>(b)] = p(row, i * K + b);
    out[static_cast<std::size_t>(K + b)] = p(row, d * K + i * K + b);
  }
  for (int b = 0; b < K - 1; ++b) out[static_cast<std::size_t>(2 * K + b)] = p(row, 2 * d * K + i * (K - 1) + b);
}

}  // namespace

void FlowModel::step_forward(int k, const Mat& u, const Mat& c, Mat& z, Vec& logdet) const {
  const int d = spec_.theta_dim;
  const Mat p = made_forward(k, u, c);
  if (spec_.kind == FlowKind::MAF) {
    const auto mu = p.leftCols(d);
    const auto s = p.rightCols(d);
    z = (u - mu).cwiseProduct((-s).array().exp().matrix());
    logdet -= s.rowwise().sum();
    return;
  }
  const int K = spec_.bins;
  z.resize(u.rows(), d);
  std::vector<double> raw;
  for (Eigen::Index r = 0; r < u.rows(); ++r)
    for (int i = 0; i < d; ++i) {
      gather_spline(p, r, i, d, K, raw);
      const SplineResult sr = rq_spline_forward(u(r, i), raw.data(), K, spec_.tail_bound);
      z(r, i) = sr.y;
      logdet(r) += sr.logdet;
    }
}

Mat FlowModel::step_inverse(int k, const Mat& z, const Mat& c) const {
  const int d = spec_.theta_dim;
  Mat u = Mat::Zero(z.rows(), d);
  std::vector<double> raw;
  for (int i = 0; i < d; ++i) {
    const Mat p = made_forward(k, u, c);
    if (spec_.kind == FlowKind::MAF) {
      u.col(i) = p.col(i) + z.col(i).cwiseProduct(p.col(d + i).array().exp().matrix());
    } else {
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        gather_spline(p, r, i, d, spec_.bins, raw);
        u(r, i) = rq_spline_inverse(z(r, i), raw.data(), spec_.bins, spec_.tail_bound);
      }
    }
  }
  return u;
}

FlowModel::BaseImage FlowModel::to_base(const Mat& u, const Mat& c) const {
  BaseImage out{u, Vec::Zero(u.rows())};
  for (int k = 0; k < spec_.transforms; ++k) {
    Mat in = k > 0 ? Mat(out.z.rowwise().reverse()) : out.z;
    step_forward(k, in, c, out.z, out.logdet);
  }
  return out;
}

Mat FlowModel::from_base(const Mat& z, const Mat& c) const {
  Mat y = z;
  for (int k = spec_.transforms - 1; k >= 0; --k) {
    const Mat u = step_inverse(k, y, c);
    y = k > 0 ? Mat(u.rowwise().reverse()) : u;
  }
  return y;
}

Vec FlowModel::log_prob(const Mat& thetas, const Mat& contexts) const {
  const int d = spec_.theta_dim, C = spec_.context_dim;
  if (thetas.cols() != d || contexts.cols() != C || (contexts.rows() != thetas.rows() && contexts.rows() != 1))
    throw Error(ErrorKind::DimensionMismatch, "log_prob input shapes do not match the flow");
  if (!thetas.allFinite() || !contexts.allFinite()) throw Error(ErrorKind::NonFiniteInput, "log_prob inputs must be finite");
  const Mat u = theta_standardizer.apply(thetas);
  Mat c = context_standardizer.apply(contexts);
  if (c.rows() == 1 && u.rows() != 1) c = Mat(c.replicate(u.rows(), 1));
  Vec out(u.rows());
  constexpr Eigen::Index kChunk = 1024;
  for (Eigen::Index r0 = 0; r0 < u.rows(); r0 += kChunk) {
    const Eigen::Index n = std::min(kChunk, u.rows() - r0);
    const BaseImage b = to_base(u.middleRows(r0, n), c.middleRows(r0, n));
    out.segment(r0, n) = -0.5 * b.z.rowwise().squaredNorm().array() - 0.5 * d * kLog2Pi + b.logdet.array();
  }
  return out.array() - theta_standardizer.log_scale_sum();
}

Mat FlowModel::sample(const Vec& context, Rng& rng, Eigen::Index n) const {
  const int d = spec_.theta_dim;
  if (context.size() != spec_.context_dim) throw Error(ErrorKind::DimensionMismatch, "context has the wrong length");
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat z(n, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int i = 0; i < d; ++i) z(r, i) = normal(rng);
  const Mat c = context_standardizer.apply(context.transpose()).replicate(n, 1);
  return theta_standardizer.invert(from_base(z, c));
}

// ---------------------------------------------------------------- tape path

ad::Var FlowModel::conditioner_tape(ad::Tape& t, int k, ad::Var u, ad::Var c) const {
  const Transform& tr = transforms_[static_cast<std::size_t>(k)];
  ad::Var h = u;
  for (std::size_t l = 0; l < tr.layers.size(); ++l) {
    const Layer& layer = tr.layers[l];
    ad::Var a = t.matmul(h, t.mask(t.param(params_, layer.w_slot), layer.mask));
    if (layer.v_slot >= 0) a = t.add(a, t.matmul(c, t.param(params_, layer.v_slot)));
    a = t.add_row(a, t.param(params_, layer.b_slot));
    h = l + 1 < tr.layers.size() ? t.relu(a) : a;
  }
  return h;
}

ad::Var FlowModel::log_prob_tape(ad::Tape& t, ad::Var u, ad::Var c) const {
  const int d = spec_.theta_dim;
  ad::Var z = u;
  ad::Var logdet{};
  for (int k = 0; k < spec_.transforms; ++k) {
    if (k > 0) z = t.reverse_cols(z);
    const ad::Var p = conditioner_tape(t, k, z, c);
    ad::Var ld{};
    if (spec_.kind == FlowKind::MAF) {
      const ad::Var mu = t.cols(p, 0, d);
      const ad::Var s = t.clamp(t.cols(p, d, d), -spec_.log_scale_clamp, spec_.log_scale_clamp);
      z = t.mul(t.sub(z, mu), t.exp(t.scale(s, -1.0)));
      ld = t.scale(t.row_sum(s), -1.0);
    } else {
      const int K = spec_.bins;
      const double B = spec_.tail_bound;
      const Mat& zin = t.value(z);
      const Mat& pv = t.value(p);
      Mat out(zin.rows(), d + 1);
      out.col(d).setZero();
      std::vector<double> raw;
      for (Eigen::Index r = 0; r < zin.rows(); ++r)
        for (int i = 0; i < d; ++i) {
          gather_spline(pv, r, i, d, K, raw);
          const SplineResult sr = rq_spline_forward(zin(r, i), raw.data(), K, B);
          out(r, i) = sr.y;
          out(r, d) += sr.logdet;
        }
      // The backward pass re-reads the inputs from copies held by the closure.
      const ad::Var node = t.custom({z, p}, std::move(out), [zc = Mat(zin), pc = Mat(pv), d, K, B](const Mat& g) {
        Mat gz = Mat::Zero(zc.rows(), zc.cols());
        Mat gp = Mat::Zero(pc.rows(), pc.cols());
        std::vector<double> raw;
        for (Eigen::Index r = 0; r < zc.rows(); ++r)
          for (int i = 0; i < d; ++i) {
            gather_spline(pc, r, i, d, K, raw);
            const auto J = rq_spline_jacobian(zc(r, i), raw.data(), K, B);
            const Eigen::RowVectorXd row = g(r, i) * J.row(0) + g(r, d) * J.row(1);
            gz(r, i) += row(0);
            for (int b = 0; b < K; ++b) {
              gp(r, i * K + b) += row(1 + b);
              gp(r, d * K + i * K + b) += row(1 + K + b);
            }
            for (int b = 0; b < K - 1; ++b) gp(r, 2 * d * K + i * (K - 1) + b) += row(1 + 2 * K + b);
          }
        return std::vector<Mat>{gz, gp};
      });
      z = t.cols(node, 0, d);
      ld = t.cols(node, d, 1);
    }
    logdet = logdet.id < 0 ? ld : t.add(logdet, ld);
  }
  const ad::Var base = t.add_scalar(t.scale(t.row_sum(t.square(z)), -0.5), -0.5 * d * kLog2Pi);
  return t.add(base, logdet);
}

double nll_and_grad_std(const FlowModel& model, const Mat& u, const Mat& c, Vec& grad, bool parallel) {
  const Eigen::Index N = u.rows();
  if (N == 0) throw Error(ErrorKind::DimensionMismatch, "empty batch");
  if (u.cols() != model.spec().theta_dim || c.cols() != model.spec().context_dim || c.rows() != N)
    throw Error(ErrorKind::DimensionMismatch, "batch shapes do not match the flow");
  const Eigen::Index P = model.params().size();
  const double inv_n = 1.0 / static_cast<double>(N);
  grad = Vec::Zero(P);
  double nll = 0.0;

  // Sum of -log q over `rows` rows starting at r0, scaled by 1/N.
  auto chunk = [&](Eigen::Index r0, Eigen::Index rows, Vec& g) {
    ad::Tape t;
    const ad::Var lp = model.log_prob_tape(t, t.constant(u.middleRows(r0, rows)), t.constant(c.middleRows(r0, rows)));
    const ad::Var loss = t.scale(t.sum_all(lp), -inv_n);
    t.backward(loss, g);
    return t.value(loss)(0, 0);
  };

  if (!parallel) {
    nll = chunk(0, N, grad);
  } else {
    const Eigen::Index chunks = (N + kGradChunkRows - 1) / kGradChunkRows;
    std::vector<Vec> grads(static_cast<std::size_t>(chunks));
    std::vector<double> losses(static_cast<std::size_t>(chunks), 0.0);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic, 1)
    for (Eigen::Index k = 0; k < chunks; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      try {
        const Eigen::Index r0 = k * kGradChunkRows;
        grads[kk] = Vec::Zero(P);
        losses[kk] = chunk(r0, std::min(kGradChunkRows, N - r0), grads[kk]);
      } catch (...) {
        errors[kk] = std::current_exception();
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (std::size_t k = 0; k < grads.size(); ++k) {
      grad += grads[k];
      nll += losses[k];
    }
  }
  nll += model.theta_standardizer.log_scale_sum();
  if (!std::isfinite(nll)) throw Error(ErrorKind::NonFiniteLoss, "batch NLL is not finite");
  if (!grad.allFinite()) throw Error(ErrorKind::NonFiniteGradient, "gradient has non-finite entries");
  return nll;
}

Vec grad_log_prob(const FlowModel& model, const Mat& thetas, const Mat& contexts, bool parallel) {
  Mat c = contexts;
  if (c.rows() == 1 && thetas.rows() != 1) c = Mat(c.replicate(thetas.rows(), 1));
  Vec g;
  nll_and_grad_std(model, model.theta_standardizer.apply(thetas), model.context_standardizer.apply(c), g, parallel);
  return -g;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'U', 'C', 'S', 'B', 'I', 'F', 'L', 'W'};
constexpr std::uint32_t kCheckpointVersion = 2;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_vec(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(v(i));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <class T>
  T get() {
    T v{};
    if (!is_.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(ErrorKind::CorruptFile, "checkpoint truncated");
    return v;
  }
  Vec get_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = get<double>();
    return v;
  }

 private:
  std::istream& is_;
};

}  // namespace

void save_flow(const std::string& path, const FlowModel& m) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + tmp);
    Writer w(os);
    os.write(kMagic, sizeof kMagic);
    const FlowSpec& s = m.spec();
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.kind));
    for (int x : {s.theta_dim, s.context_dim, s.transforms, s.hidden_layers, s.hidden_units, s.bins})
      w.put<std::int32_t>(x);
    w.put<double>(s.tail_bound);
    w.put<double>(s.log_scale_clamp);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.data_hash.size()));
    os.write(m.data_hash.data(), static_cast<std::streamsize>(m.data_hash.size()));
    w.put_vec(m.theta_standardizer.mean);
    w.put_vec(m.theta_standardizer.scale);
    w.put_vec(m.context_standardizer.mean);
    w.put_vec(m.context_standardizer.scale);
    w.put<double>(m.context_standardizer.clip);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.params().size()));
    w.put_vec(m.params().values());
    if (!os) throw Error(ErrorKind::Io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

FlowModel load_flow(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(ErrorKind::CorruptFile, path + " is not a flow checkpoint");
  Reader r(is);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::SchemaMismatch, "unsupported checkpoint version " + std::to_string(version));
  const auto kind = r.get<std::uint32_t>();
  if (kind > 1) throw Error(ErrorKind::CorruptFile, "unknown flow kind in checkpoint");
  FlowSpec s;
  s.kind = static_cast<FlowKind>(kind);
  s.theta_dim = r.get<std::int32_t>();
  s.context_dim = r.get<std::int32_t>();
  s.transforms = r.get<std::int32_t>();
  s.hidden_layers = r.get<std::int32_t>();
  s.hidden_units = r.get<std::int32_t>();
  s.bins = r.get<std::int32_t>();
  s.tail_bound = r.get<double>();
  s.log_scale_clamp = r.get<double>();
  if (s.theta_dim < 1 || s.theta_dim > 100000 || s.context_dim < 0 || s.context_dim > 10000000 ||
      s.transforms < 1 || s.transforms > 1000 || s.hidden_layers < 0 || s.hidden_layers > 1000 ||
      s.hidden_units < 1 || s.hidden_units > 100000)
    throw Error(ErrorKind::CorruptFile, "implausible dimensions in checkpoint");
  const auto tag_len = r.get<std::uint32_t>();
  if (tag_len > 4096) throw Error(ErrorKind::CorruptFile, "implausible tag length in checkpoint");
  std::string tag(tag_len, '\0');
  if (!is.read(tag.data(), tag_len)) throw Error(ErrorKind::CorruptFile, "checkpoint truncated");
  FlowModel m = FlowModel::create(s, 0);
  m.data_hash = std::move(tag);
  m.theta_standardizer.mean = r.get_vec(s.theta_dim);
  m.theta_standardizer.scale = r.get_vec(s.theta_dim);
  m.context_standardizer.mean = r.get_vec(s.context_dim);
  m.context_standardizer.scale = r.get_vec(s.context_dim);
  m.context_standardizer.clip = r.get<double>();
  if (!(m.context_standardizer.clip >= 0.0)) throw Error(ErrorKind::CorruptFile, "invalid context clip in checkpoint");
  const auto n = r.get<std::uint64_t>();
  if (n != static_cast<std::uint64_t>(m.params().size()))
    throw Error(ErrorKind::CorruptFile, "checkpoint parameter count does not match its dimensions");
  m.params().values() = r.get_vec(static_cast<Eigen::Index>(n));
  if (is.peek() != std::char_traits<char>::eof()) throw Error(ErrorKind::CorruptFile, "trailing bytes in checkpoint");
  return m;
}

}  // namespace ucsbi
