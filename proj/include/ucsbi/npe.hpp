#pragma once

// Neural posterior estimation: fit q(theta | context) to simulated pairs by
// minibatch Adam on the mean negative log density, keeping the parameters
// with the lowest validation loss.

#include "ucsbi/config.hpp"
#include "ucsbi/flows.hpp"
#include "ucsbi/simfarm.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ucsbi {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  FlowKind flow = FlowKind::MAF;
  int transforms = 3;
  int hidden_layers = 3;
  int hidden_units = 256;
  int bins = 8;
  bool shuffle = true;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  /// Bound on standardized context coordinates; 0 disables.
  double context_clip = 0.0;
  /// Chunked OpenMP gradient; false uses the single-tape reference.
  bool parallel = true;
};

TrainConfig train_config_from(const TrainSettings& s);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, const TrainConfig& cfg);

/// Mean of -log q(theta | context) over raw rows. Throws NonFiniteLoss.
double nll_loss(const FlowModel& model, const Mat& thetas, const Mat& contexts);

struct LearningCurve {
  std::vector<double> train_nll;  // size-weighted mean of the epoch's minibatch losses
  std::vector<double> val_nll;    // full validation set after the epoch
  int selected = -1;              // 0-based epoch with the minimum validation loss
};

/// Columns epoch (1-based), train_nll, val_nll, selected (0/1).
void write_learning_curve_csv(const std::string& path, const LearningCurve& curve);

struct TrainResult {
  FlowModel model;  // selected snapshot
  LearningCurve curve;
};

/// Trains on raw (theta, context) rows. Standardizers are fit on the training
/// rows only. With a non-empty `checkpoint_path`, the selected model is
/// written there (atomically); on NonFiniteLoss the last good snapshot is
/// written before the error propagates. `data_hash` is stored in the model.
TrainResult train(const Mat& train_theta, const Mat& train_context, const Mat& val_theta, const Mat& val_context,
                  const TrainConfig& cfg, const std::string& checkpoint_path = {}, const std::string& data_hash = {});

/// Dataset front end: both sets must carry the same config hash
/// (ConfigHashMismatch otherwise); the hash is stored in the checkpoint.
TrainResult train_on_datasets(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                              const std::string& checkpoint_path = {});

}  // namespace ucsbi
