#include "gam/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "gam/errors.hpp"
#include "gam/evaluation.hpp"
#include "gam/parallel.hpp"
#include "gam/rng.hpp"

namespace gam {

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0 && cfg.learning_rate < 1.0)) {
    throw ConfigError("learning_rate must lie in (0, 1)");
  }
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.num_heads < 1) throw ConfigError("num_heads must be at least 1");
  if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (cfg.num_geo < 1 || cfg.num_euc < 1) throw ConfigError("neighbor counts must be positive");
  if (cfg.nodes < 1) throw ConfigError("nodes must be at least 1");
  if (cfg.similarity_kind == SimilarityKind::gaussian && cfg.sigma <= 0.0) {
    throw ConfigError("gaussian similarity needs sigma > 0");
  }
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig cfg;
  if (name == "it") {
    cfg.num_geo = 30;
    cfg.num_euc = 25;
    cfg.num_heads = 8;
    cfg.sigma = 2.0;
    cfg.nodes = 60;
    cfg.learning_rate = 0.001;
    cfg.batch_size = 32;
    cfg.similarity_kind = SimilarityKind::identity;
  } else if (name == "kc") {
    cfg.num_geo = 30;
    cfg.num_euc = 30;
    cfg.num_heads = 8;
    cfg.sigma = 2.0;
    cfg.nodes = 60;
    cfg.learning_rate = 0.008;
    cfg.batch_size = 250;
    cfg.similarity_kind = SimilarityKind::gaussian;
  } else if (name == "poa") {
    cfg.num_geo = 10;
    cfg.num_euc = 15;
    cfg.num_heads = 4;
    cfg.sigma = 2.0;
    cfg.nodes = 60;
    cfg.learning_rate = 0.001;
    cfg.batch_size = 32;
    cfg.similarity_kind = SimilarityKind::identity;
  } else if (name == "bj") {
    cfg.num_geo = 15;
    cfg.num_euc = 15;
    cfg.num_heads = 4;
    cfg.sigma = 10.0;
    cfg.nodes = 60;
    cfg.learning_rate = 0.001;
    cfg.batch_size = 250;
    cfg.similarity_kind = SimilarityKind::gaussian;
  } else {
    std::string known;
    for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
    throw ConfigError("unknown preset '" + name + "'; available presets: " + known);
  }
  return cfg;
}

std::vector<std::string> preset_names() { return {"it", "kc", "poa", "bj"}; }

OptimizerState make_optimizer_state(const ModelParams& params) {
  OptimizerState state;
  const std::size_t n = param_count(params);
  state.m.assign(n, 0.0);
  state.v.assign(n, 0.0);
  return state;
}

void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& state, double lr) {
  if (state.m.size() != param_count(params)) {
    throw DimensionError("adam_step: optimizer state sized for a different model");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t i = 0;
  for_each_param_pair(params, grads, [&](double& p, double g) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    p -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    ++i;
  });
}

ModelParams init_params(const TrainConfig& cfg, std::size_t feature_count) {
  validate_train_config(cfg);
  Rng rng(cfg.seed);

  auto init_block = [&](Mechanism mechanism, std::size_t n) {
    AttentionBlockParams block;
    block.mechanism = mechanism;
    block.similarity_kind = cfg.similarity_kind;
    block.sigma = cfg.sigma;
    block.distance_scale = 1.0;
    const double bound = std::sqrt(1.0 / static_cast<double>(n));
    block.heads.resize(cfg.num_heads);
    for (auto& head : block.heads) {
      head.w_sim = Matrix(n, n);
      for (auto& v : head.w_sim.data()) v = rng.uniform(-bound, bound);
      head.b_sim.assign(n, 0.0);
      head.w_gate = Matrix(n, n);
      for (auto& v : head.w_gate.data()) v = rng.uniform(-bound, bound);
      head.b_gate.assign(n, 0.0);
    }
    block.agg.weight.assign(cfg.num_heads, 0.0);
    block.agg.bias.assign(cfg.num_heads, 0.0);
    return block;
  };

  ModelParams params;
  params.geo_block = init_block(Mechanism::geo, cfg.num_geo);
  params.euc_block = init_block(Mechanism::euc, cfg.num_euc);

  const std::size_t concat_len = 3 * feature_count + 7;
  const double hidden_bound = std::sqrt(1.0 / static_cast<double>(concat_len));
  params.w_hidden = Matrix(cfg.nodes, concat_len);
  for (auto& v : params.w_hidden.data()) v = rng.uniform(-hidden_bound, hidden_bound);
  params.b_hidden.assign(cfg.nodes, 0.0);

  const double out_bound = std::sqrt(1.0 / static_cast<double>(cfg.nodes));
  params.w_out.assign(cfg.nodes, 0.0);
  for (auto& v : params.w_out) v = rng.uniform(-out_bound, out_bound);
  params.b_out = 0.0;
  params.hidden_activation = Activation::elu;
  params.output_activation = Activation::linear;
  return params;
}

double validation_male(const Vec& preds, const Vec& targets, bool price_is_log_scaled) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw DimensionError("validation_male: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (price_is_log_scaled) {
      acc += std::abs(preds[i] - targets[i]);
    } else {
      acc += std::abs(std::log(std::max(preds[i], 1e-12)) - std::log(targets[i]));
    }
  }
  return acc / static_cast<double>(preds.size());
}

TrainResult train(const Dataset& train_ds, const Dataset& val_ds,
                  const NeighborIndex& train_index, const NeighborIndex& val_index,
                  const TrainConfig& cfg, unsigned threads) {
  validate_train_config(cfg);
  if (train_ds.empty() || val_ds.empty()) throw EmptyDatasetError("train: empty split");

  const std::uint64_t pool_hash = dataset_hash(train_ds);
  if (train_index.pool_hash != pool_hash || val_index.pool_hash != pool_hash) {
    throw StateError("train: neighbor index was not built against this training pool");
  }
  if (train_index.num_geo != cfg.num_geo || train_index.num_euc != cfg.num_euc ||
      val_index.num_geo != cfg.num_geo || val_index.num_euc != cfg.num_euc) {
    throw StateError("train: neighbor index counts do not match the config");
  }

  const std::size_t t = train_ds.descriptor.feature_count();
  const bool log_scaled = train_ds.descriptor.price_is_log_scaled;

  ModelParams params = init_params(cfg, t);
  params.geo_block.distance_scale = std::max(train_index.max_geo_distance(), 1e-12);
  {
    double lat_min = train_ds.records[0].lat, lat_max = lat_min;
    double lon_min = train_ds.records[0].lon, lon_max = lon_min;
    for (const auto& rec : train_ds.records) {
      lat_min = std::min(lat_min, rec.lat);
      lat_max = std::max(lat_max, rec.lat);
      lon_min = std::min(lon_min, rec.lon);
      lon_max = std::max(lon_max, rec.lon);
    }
    params.geo_block.lat_offset = lat_min;
    params.geo_block.lat_scale = lat_max > lat_min ? 1.0 / (lat_max - lat_min) : 1.0;
    params.geo_block.lon_offset = lon_min;
    params.geo_block.lon_scale = lon_max > lon_min ? 1.0 / (lon_max - lon_min) : 1.0;
  }

  OptimizerState opt = make_optimizer_state(params);
  const IdMap pool_map(train_ds);

  Vec val_targets(val_ds.size());
  for (std::size_t i = 0; i < val_ds.size(); ++i) val_targets[i] = val_ds.records[i].price;

  // One stream drives epoch shuffles; init_params consumed cfg.seed already.
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.best_val_male = std::numeric_limits<double>::infinity();
  ModelParams best_params = params;
  std::size_t epochs_without_improvement = 0;

  Gradients grads = make_zero_gradients(params);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batch_begin = 0;
    while (batch_begin < order.size()) {
      const std::size_t batch_end = std::min(batch_begin + cfg.batch_size, order.size());
      const auto batch_n = static_cast<double>(batch_end - batch_begin);

      grads = make_zero_gradients(params);
      for (std::size_t b = batch_begin; b < batch_end; ++b) {
        const std::size_t row = order[b];
        const SampleView view = make_sample_view(train_ds, row, train_index, train_ds, pool_map);
        const ForwardCache cache = forward(view, params);
        const double target = train_ds.records[row].price;
        loss_sum += loss_mse(cache.prediction, target);
        backward_accumulate(cache, 2.0 * (cache.prediction - target) / batch_n, params, grads);
      }
      adam_step(params, grads, opt, cfg.learning_rate);
      batch_begin = batch_end;
    }

    Vec val_preds;
    embed_dataset(val_ds, val_index, train_ds, params, threads, &val_preds);
    const double val_male = validation_male(val_preds, val_targets, log_scaled);
    const double val_rmse = rmse_native(val_preds, val_targets, log_scaled);

    const auto epoch_end = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(train_ds.size());
    log.val_male = val_male;
    log.val_rmse = val_rmse;
    log.wall_ms = std::chrono::duration<double, std::milli>(epoch_end - epoch_start).count();
    result.log.push_back(log);

    if (val_male < result.best_val_male) {
      result.best_val_male = val_male;
      result.best_epoch = epoch;
      best_params = params;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= cfg.patience) break;
    }
  }

  result.params = std::move(best_params);
  return result;
}

}  // namespace gam
