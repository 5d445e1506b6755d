#pragma once

// Conditional normalizing flows q(theta | context): a stack of autoregressive
// transforms (affine MAF steps or rational-quadratic spline steps), each
// conditioned by a masked MLP that also sees the full context.

#include "ucsbi/autodiff.hpp"
#include "ucsbi/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace ucsbi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class FlowKind { MAF = 0, NSF = 1 };

const char* to_string(FlowKind k);
FlowKind flow_kind_from_string(const std::string& s);

/// True when the spline transform was compiled in.
bool nsf_available();

struct FlowSpec {
  FlowKind kind = FlowKind::MAF;
  int theta_dim = 1;
  int context_dim = 0;
  int transforms = 3;
  int hidden_layers = 3;
  int hidden_units = 256;
  int bins = 8;             // spline only
  double tail_bound = 5.0;  // spline only
  double log_scale_clamp = 5.0;

  /// Conditioner outputs per dimension.
  int params_per_dim() const { return kind == FlowKind::MAF ? 2 : 3 * bins - 1; }
};

/// Per-coordinate affine map x -> (x - mean) / scale, then clamped to
/// [-clip, clip] when clip > 0.
struct Standardizer {
  Vec mean;
  Vec scale;
  double clip = 0.0;

  static Standardizer identity(Eigen::Index n);
  /// Mean and population standard deviation of the rows; coordinates with a
  /// (numerically) zero spread get scale 1.
  static Standardizer fit(const Mat& rows);
  Mat apply(const Mat& rows) const;
  Mat invert(const Mat& rows) const;
  double log_scale_sum() const { return scale.array().log().sum(); }
  bool operator==(const Standardizer& o) const { return mean == o.mean && scale == o.scale && clip == o.clip; }
};

class FlowModel {
 public:
  /// Identity-initialized flow: hidden layers uniform in +-1/sqrt(fan_in),
  /// final conditioner layer zero, so the initial density is the base.
  static FlowModel create(const FlowSpec& spec, std::uint64_t init_seed);

  const FlowSpec& spec() const { return spec_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  Standardizer theta_standardizer;
  Standardizer context_standardizer;
  /// Config hash of the data the model was trained on; empty if untracked.
  std::string data_hash;

  /// log q(theta | context) in original theta units. `contexts` has one row
  /// per theta row, or a single row shared by all. Throws NonFiniteInput.
  Vec log_prob(const Mat& thetas, const Mat& contexts) const;

  /// n draws in original theta units for one raw context vector.
  Mat sample(const Vec& context, Rng& rng, Eigen::Index n) const;

  struct BaseImage {
    Mat z;
    Vec logdet;
  };
  /// Density direction in standardized space: u -> z with the summed log|det|.
  BaseImage to_base(const Mat& u, const Mat& c) const;
  /// Sampling direction in standardized space (sequential inversion).
  Mat from_base(const Mat& z, const Mat& c) const;

  /// Conditioner output of transform k, one row per input row, laid out by
  /// parameter block then dimension. MAF: [mu (d) | s (d)] with s clamped.
  /// NSF: [widths (d*K) | heights (d*K) | derivatives (d*(K-1))], raw.
  Mat made_forward(int k, const Mat& u, const Mat& c) const;

  /// Standardized-space log density (rows x 1) recorded on a tape; excludes
  /// the theta standardization constant.
  ad::Var log_prob_tape(ad::Tape& tape, ad::Var u, ad::Var c) const;

  /// Mask of layer l in transform k (for inspection and tests).
  const Mat& mask(int k, int l) const { return transforms_[static_cast<std::size_t>(k)].layers[static_cast<std::size_t>(l)].mask; }
  int layer_count() const { return spec_.hidden_layers + 1; }

  bool operator==(const FlowModel& o) const;

 private:
  struct Layer {
    int w_slot = -1;
    int v_slot = -1;  // context weights, -1 when context_dim == 0
    int b_slot = -1;
    Mat mask;
  };
  struct Transform {
    std::vector<Layer> layers;
  };

  void build_structure();
  Mat conditioner_raw(int k, const Mat& u, const Mat& c) const;
  ad::Var conditioner_tape(ad::Tape& tape, int k, ad::Var u, ad::Var c) const;
  void step_forward(int k, const Mat& u, const Mat& c, Mat& z, Vec& logdet) const;
  Mat step_inverse(int k, const Mat& z, const Mat& c) const;

  FlowSpec spec_;
  ad::ParamStore params_;
  std::vector<Transform> transforms_;

  friend FlowModel load_flow(const std::string& path);
};

/// Column of the conditioner output feeding dimension i, parameter p.
int conditioner_dim_of_column(const FlowSpec& spec, int column);

/// Mean negative log density over the rows of standardized inputs (including
/// the theta standardization constant) and its exact gradient, written into
/// `grad` (resized). With `parallel`, fixed 64-row chunks are differentiated
/// on separate tapes under OpenMP and summed in chunk order; the serial
/// reference differentiates the whole batch on one tape.
/// Throws NonFiniteLoss / NonFiniteGradient.
double nll_and_grad_std(const FlowModel& model, const Mat& u, const Mat& c, Vec& grad, bool parallel = true);

inline constexpr Eigen::Index kGradChunkRows = 64;

/// Gradient of the mean log_prob over raw (theta, context) rows.
Vec grad_log_prob(const FlowModel& model, const Mat& thetas, const Mat& contexts, bool parallel = true);

/// Rational-quadratic spline on [-B, B] with identity tails, for one scalar.
/// `raw` holds K widths, K heights and K-1 interior derivatives, unconstrained.
struct SplineResult {
  double y;
  double logdet;
};
SplineResult rq_spline_forward(double x, const double* raw, int bins, double tail_bound);
double rq_spline_inverse(double y, const double* raw, int bins, double tail_bound);
/// d(y, logdet)/d(x, raw): row 0 for y, row 1 for logdet; 1 + 3K - 1 columns.
Eigen::Matrix<double, 2, Eigen::Dynamic> rq_spline_jacobian(double x, const double* raw, int bins, double tail_bound);

/// Binary checkpoint (layout in docs/formats.md). Writes go to a temporary
/// file that is renamed into place. Throws CorruptFile / SchemaMismatch / Io.
void save_flow(const std::string& path, const FlowModel& model);
FlowModel load_flow(const std::string& path);

}  // namespace ucsbi
