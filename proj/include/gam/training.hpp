#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gam/model.hpp"

namespace gam {

struct TrainConfig {
  std::size_t num_geo = 30;
  std::size_t num_euc = 30;
  std::size_t num_heads = 8;
  double sigma = 2.0;
  std::size_t nodes = 60;
  double learning_rate = 0.008;
  std::size_t batch_size = 250;
  SimilarityKind similarity_kind = SimilarityKind::gaussian;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

// Best hyperparameter sets per dataset, loadable by name (it/kc/poa/bj).
TrainConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

struct OptimizerState {
  Vec m;
  Vec v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState make_optimizer_state(const ModelParams& params);

// Standard Adam update with bias correction; deterministic.
void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& state, double lr);

// Seeded initialization: projection and gate weights uniform in
// +-sqrt(1/fan_in), biases and aggregation gates zero.
ModelParams init_params(const TrainConfig& cfg, std::size_t feature_count);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_male = 0.0;
  double val_rmse = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_male = 0.0;
};

// Mini-batch Adam with shuffled epochs, validation-MALE early stopping, and
// a best-validation checkpoint. Bit-reproducible for a fixed config and seed.
// Both indices must be built against the training pool.
TrainResult train(const Dataset& train_ds, const Dataset& val_ds,
                  const NeighborIndex& train_index, const NeighborIndex& val_index,
                  const TrainConfig& cfg, unsigned threads = 0);

// MALE of predictions in training scale; raw-scale predictions are floored at
// a tiny positive value so early epochs always produce a usable signal.
double validation_male(const Vec& preds, const Vec& targets, bool price_is_log_scaled);

}  // namespace gam
