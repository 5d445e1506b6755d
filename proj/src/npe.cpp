#include "ucsbi/npe.hpp"

#include "ucsbi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ucsbi {

TrainConfig train_config_from(const TrainSettings& s) {
  TrainConfig c;
  c.epochs = s.epochs;
  c.batch_size = s.batch_size;
  c.learning_rate = s.learning_rate;
  c.seed = s.seed;
  c.flow = s.flow;
  c.transforms = s.transforms;
  c.hidden_layers = s.hidden_layers;
  c.hidden_units = s.hidden_units;
  c.bins = s.bins;
  c.grad_clip = s.grad_clip;
  c.context_clip = s.context_clip;
  return c;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& st, const TrainConfig& cfg) {
  if (grad.size() != params.size()) throw Error(ErrorKind::DimensionMismatch, "gradient and parameters differ in size");
  if (st.m.size() != params.size()) {
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
    st.step = 0;
  }
  ++st.step;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  params.array() -= cfg.learning_rate * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + cfg.epsilon);
}

double nll_loss(const FlowModel& model, const Mat& thetas, const Mat& contexts) {
  if (thetas.rows() == 0) throw Error(ErrorKind::DimensionMismatch, "empty batch");
  const double loss = -model.log_prob(thetas, contexts).mean();
  if (!std::isfinite(loss)) throw Error(ErrorKind::NonFiniteLoss, "non-finite negative log-likelihood");
  return loss;
}

void write_learning_curve_csv(const std::string& path, const LearningCurve& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "epoch,train_nll,val_nll,selected\n";
  char buf[128];
  for (std::size_t e = 0; e < c.val_nll.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d\n", e + 1, c.train_nll[e], c.val_nll[e],
                  static_cast<int>(e) == c.selected ? 1 : 0);
    out << buf;
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

namespace {

Mat gather_rows(const Mat& m, const std::vector<Eigen::Index>& idx, std::size_t begin, std::size_t end) {
  Mat out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t k = begin; k < end; ++k) out.row(static_cast<Eigen::Index>(k - begin)) = m.row(idx[k]);
  return out;
}

// Validation loss in standardized space plus the theta scale constant.
double std_nll(const FlowModel& model, const Mat& u, const Mat& c) {
  const auto img = model.to_base(u, c);
  const double d = static_cast<double>(u.cols());
  const double log_base =
      -0.5 * img.z.rowwise().squaredNorm().mean() - 0.5 * d * std::log(2.0 * 3.14159265358979323846);
  const double nll = -(log_base + img.logdet.mean()) + model.theta_standardizer.log_scale_sum();
  if (!std::isfinite(nll)) throw Error(ErrorKind::NonFiniteLoss, "non-finite validation loss");
  return nll;
}

}  // namespace

TrainResult train(const Mat& train_theta, const Mat& train_context, const Mat& val_theta, const Mat& val_context,
                  const TrainConfig& cfg, const std::string& checkpoint_path, const std::string& data_hash) {
  const Eigen::Index n = train_theta.rows();
  if (n == 0 || val_theta.rows() == 0) throw Error(ErrorKind::InvalidConfig, "training and validation sets must be non-empty");
  if (train_context.rows() != n || val_context.rows() != val_theta.rows() || val_theta.cols() != train_theta.cols() ||
      val_context.cols() != train_context.cols())
    throw Error(ErrorKind::DimensionMismatch, "theta and context sets do not line up");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0))
    throw Error(ErrorKind::InvalidConfig, "epochs, batch size and learning rate must be positive");
  if (cfg.batch_size > n) throw Error(ErrorKind::InvalidConfig, "batch size exceeds the training set");
  if (!train_theta.allFinite() || !train_context.allFinite() || !val_theta.allFinite() || !val_context.allFinite())
    throw Error(ErrorKind::NonFiniteInput, "non-finite training data");

  FlowSpec spec;
  spec.kind = cfg.flow;
  spec.theta_dim = static_cast<int>(train_theta.cols());
  spec.context_dim = static_cast<int>(train_context.cols());
  spec.transforms = cfg.transforms;
  spec.hidden_layers = cfg.hidden_layers;
  spec.hidden_units = cfg.hidden_units;
  spec.bins = cfg.bins;
  if (spec.kind == FlowKind::NSF && !nsf_available())
    throw Error(ErrorKind::InvalidConfig, "spline flows are not built into this binary");

  FlowModel model = FlowModel::create(spec, cfg.seed);
  model.theta_standardizer = Standardizer::fit(train_theta);
  model.context_standardizer = Standardizer::fit(train_context);
  model.context_standardizer.clip = cfg.context_clip;
  model.data_hash = data_hash;
  const Mat u = model.theta_standardizer.apply(train_theta);
  const Mat c = model.context_standardizer.apply(train_context);
  const Mat u_val = model.theta_standardizer.apply(val_theta);
  const Mat c_val = model.context_standardizer.apply(val_context);

  TrainResult result{model, {}};
  Rng shuffle_rng = substream(cfg.seed, {0x7368756666ULL});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  AdamState adam;
  Vec grad;
  double best = std::numeric_limits<double>::infinity();

  auto fail = [&](const Error& e) {
    if (!checkpoint_path.empty() && result.curve.selected >= 0) save_flow(checkpoint_path, result.model);
    throw Error(ErrorKind::NonFiniteLoss, std::string(e.what()) + " (epoch " +
                                              std::to_string(result.curve.val_nll.size() + 1) + ")");
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double weighted = 0.0;
    try {
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
        const Mat ub = gather_rows(u, order, b, e);
        const Mat cb = gather_rows(c, order, b, e);
        const double loss = nll_and_grad_std(model, ub, cb, grad, cfg.parallel);
        weighted += loss * static_cast<double>(e - b);
        if (cfg.grad_clip > 0.0) {
          const double norm = grad.norm();
          if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
        }
        adam_step(model.params().values(), grad, adam, cfg);
      }
      const double val = std_nll(model, u_val, c_val);
      result.curve.train_nll.push_back(weighted / static_cast<double>(n));
      result.curve.val_nll.push_back(val);
      if (val < best) {
        best = val;
        result.curve.selected = epoch;
        result.model = model;
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NonFiniteLoss || e.kind() == ErrorKind::NonFiniteGradient ||
          e.kind() == ErrorKind::NonFiniteInput)
        fail(e);
      throw;
    }
  }
  if (!checkpoint_path.empty()) save_flow(checkpoint_path, result.model);
  return result;
}

TrainResult train_on_datasets(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                              const std::string& checkpoint_path) {
  if (train_set.manifest.config_hash != val_set.manifest.config_hash)
    throw Error(ErrorKind::ConfigHashMismatch, "training set (" + train_set.manifest.config_hash +
                                                   ") and validation set (" + val_set.manifest.config_hash +
                                                   ") come from different configs");
  const Mat th = theta_matrix(train_set.records), cx = context_matrix(train_set.records);
  const Mat vth = theta_matrix(val_set.records), vcx = context_matrix(val_set.records);
  return train(th, cx, vth, vcx, cfg, checkpoint_path, train_set.manifest.config_hash);
}

}  // namespace ucsbi
