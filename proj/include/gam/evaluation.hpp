#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gam/dataset.hpp"
#include "gam/linalg.hpp"
#include "gam/training.hpp"

namespace gam {

// Mean absolute difference of natural-log prices. Raw-scale inputs must be
// strictly positive; log-scaled inputs are compared directly.
double male(const Vec& preds, const Vec& targets, bool price_is_log_scaled);

double rmse(const Vec& preds, const Vec& targets);

// RMSE in the dataset's native price units: log-scale predictions and targets
// are exponentiated first.
double rmse_native(const Vec& preds, const Vec& targets, bool price_is_log_scaled);

struct MetricReport {
  std::string dataset;
  std::string model;
  std::string mode;  // "raw", "embeddings", or "-" for single-split rows
  double male_best = 0.0;
  double rmse_best = 0.0;
  std::optional<double> male_avg;
  std::optional<double> rmse_avg;
  std::size_t n_folds = 1;
  std::uint64_t seed = 0;
};

// Fits on the fold's training part and returns predictions (training scale)
// for the fold's evaluation part.
using FoldTrainer = std::function<Vec(const Dataset& fold_train, const Dataset& fold_eval)>;

// Deterministic seeded fold assignment: disjoint, covering, sizes within one.
std::vector<std::vector<std::size_t>> kfold_assign(std::size_t n, std::size_t k,
                                                   std::uint64_t seed);

// Best = min over folds, avg = mean over folds, per metric.
MetricReport kfold_cv(const Dataset& ds, std::size_t k, const FoldTrainer& trainer,
                      std::uint64_t seed, const std::string& model_name = "model",
                      const std::string& mode = "raw");

struct OlsModel {
  Vec coef;
  double intercept = 0.0;
};

// Closed-form least squares with intercept via the normal equations;
// rank-deficient systems fall back to a ridge jitter of 1e-8.
OlsModel fit_ols(const Matrix& x, const Vec& y);
Vec predict_ols(const OlsModel& model, const Matrix& x);
Vec baseline_ols(const Matrix& train_x, const Vec& train_y, const Matrix& test_x);

// Mean target of the k Euclidean-nearest training rows; ties break by
// ascending row index.
Vec baseline_knn(const Matrix& train_x, const Vec& train_y, const Matrix& test_x, std::size_t k);

struct QuantileRow {
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
};

struct DistanceQuantiles {
  QuantileRow geodesic_km;
  QuantileRow euclidean_norm;
  std::size_t n = 0;
};

// Per-house mean distance to the n nearest neighbors, summarized over houses.
// Structural distances use min-max-normalized features.
DistanceQuantiles distance_quantiles(const Dataset& ds, std::size_t n, unsigned threads = 0);

struct BenchmarkOptions {
  bool raw = true;
  bool embeddings = true;
  std::size_t folds = 10;
  std::size_t knn_k = 10;
  double idw_power = 2.0;
  unsigned threads = 0;
};

// Trains the attention model on a 70/20/10 split, then scores the classical
// baselines on raw normalized features and on the exported embeddings with
// k-fold cross-validation.
std::vector<MetricReport> benchmark(const Dataset& ds, const TrainConfig& cfg,
                                    const BenchmarkOptions& opts);

Matrix feature_matrix(const Dataset& ds);
Vec price_vector(const Dataset& ds);

}  // namespace gam
