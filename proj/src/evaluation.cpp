#include "gam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "gam/errors.hpp"
#include "gam/parallel.hpp"
#include "gam/rng.hpp"
#include "gam/spatial.hpp"

namespace gam {

double male(const Vec& preds, const Vec& targets, bool price_is_log_scaled) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw DimensionError("male: need equal-length, non-empty vectors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (price_is_log_scaled) {
      acc += std::abs(preds[i] - targets[i]);
    } else {
      if (preds[i] <= 0.0 || targets[i] <= 0.0) {
        throw DomainError("male: raw-scale prices must be positive (sample " +
                          std::to_string(i) + ")");
      }
      acc += std::abs(std::log(preds[i]) - std::log(targets[i]));
    }
  }
  return acc / static_cast<double>(preds.size());
}

double rmse(const Vec& preds, const Vec& targets) {
  if (preds.size() != targets.size() || preds.empty()) {
    throw DimensionError("rmse: need equal-length, non-empty vectors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double r = preds[i] - targets[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(preds.size()));
}

double rmse_native(const Vec& preds, const Vec& targets, bool price_is_log_scaled) {
  if (!price_is_log_scaled) return rmse(preds, targets);
  Vec p(preds.size()), t(targets.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p[i] = std::exp(preds[i]);
    t[i] = std::exp(targets[i]);
  }
  return rmse(p, t);
}

std::vector<std::vector<std::size_t>> kfold_assign(std::size_t n, std::size_t k,
                                                   std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  if (k > n) throw ConfigError("kfold: k exceeds dataset size");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return folds;
}

MetricReport kfold_cv(const Dataset& ds, std::size_t k, const FoldTrainer& trainer,
                      std::uint64_t seed, const std::string& model_name,
                      const std::string& mode) {
  const auto folds = kfold_assign(ds.size(), k, seed);
  const bool log_scaled = ds.descriptor.price_is_log_scaled;

  Vec fold_male, fold_rmse;
  for (std::size_t f = 0; f < k; ++f) {
    Dataset fold_train;
    Dataset fold_eval;
    fold_train.descriptor = ds.descriptor;
    fold_eval.descriptor = ds.descriptor;
    std::vector<bool> in_eval(ds.size(), false);
    for (std::size_t idx : folds[f]) in_eval[idx] = true;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      (in_eval[i] ? fold_eval : fold_train).records.push_back(ds.records[i]);
    }

    const Vec preds = trainer(fold_train, fold_eval);
    const Vec targets = price_vector(fold_eval);
    fold_male.push_back(male(preds, targets, log_scaled));
    fold_rmse.push_back(rmse_native(preds, targets, log_scaled));
  }

  MetricReport report;
  report.dataset = ds.descriptor.name;
  report.model = model_name;
  report.mode = mode;
  report.n_folds = k;
  report.seed = seed;
  report.male_best = *std::min_element(fold_male.begin(), fold_male.end());
  report.rmse_best = *std::min_element(fold_rmse.begin(), fold_rmse.end());
  report.male_avg = std::accumulate(fold_male.begin(), fold_male.end(), 0.0) /
                    static_cast<double>(k);
  report.rmse_avg = std::accumulate(fold_rmse.begin(), fold_rmse.end(), 0.0) /
                    static_cast<double>(k);
  return report;
}

namespace {

// Cholesky solve of (A + jitter I) x = b; A symmetric positive semi-definite.
// Returns false when a pivot collapses, signalling the jitter retry.
bool cholesky_solve(Matrix a, Vec b, Vec& x) {
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 1e-300)) return false;
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
    }
  }
  // forward then backward substitution
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  x.assign(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= a(k, ii) * x[k];
    x[ii] = s / a(ii, ii);
  }
  return true;
}

}  // namespace

OlsModel fit_ols(const Matrix& x, const Vec& y) {
  if (x.rows() == 0) throw ConfigError("ols: empty training set");
  if (x.rows() != y.size()) throw DimensionError("ols: row count mismatch");
  const std::size_t p = x.cols() + 1;  // intercept last

  Matrix gram(p, p);
  Vec rhs(p, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      const double xi = i + 1 == p ? 1.0 : x(r, i);
      rhs[i] += xi * y[r];
      for (std::size_t j = i; j < p; ++j) {
        const double xj = j + 1 == p ? 1.0 : x(r, j);
        gram(i, j) += xi * xj;
      }
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);
  }

  Vec solution;
  if (!cholesky_solve(gram, rhs, solution)) {
    Matrix jittered = gram;
    for (std::size_t i = 0; i < p; ++i) jittered(i, i) += 1e-8;
    if (!cholesky_solve(jittered, rhs, solution)) {
      throw ConfigError("ols: normal equations not solvable even with jitter");
    }
  }

  OlsModel model;
  model.coef.assign(solution.begin(), solution.end() - 1);
  model.intercept = solution.back();
  return model;
}

Vec predict_ols(const OlsModel& model, const Matrix& x) {
  if (x.cols() != model.coef.size()) throw DimensionError("ols: feature count mismatch");
  Vec preds(x.rows(), model.intercept);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < x.cols(); ++j) preds[r] += model.coef[j] * x(r, j);
  }
  return preds;
}

Vec baseline_ols(const Matrix& train_x, const Vec& train_y, const Matrix& test_x) {
  return predict_ols(fit_ols(train_x, train_y), test_x);
}

Vec baseline_knn(const Matrix& train_x, const Vec& train_y, const Matrix& test_x, std::size_t k) {
  if (k == 0 || k > train_x.rows()) {
    throw ConfigError("knn: k must lie in [1, train size]");
  }
  if (train_x.rows() != train_y.size()) throw DimensionError("knn: row count mismatch");
  if (train_x.cols() != test_x.cols()) throw DimensionError("knn: feature count mismatch");

  Vec preds(test_x.rows(), 0.0);
  std::vector<std::pair<double, std::size_t>> scratch(train_x.rows());
  for (std::size_t q = 0; q < test_x.rows(); ++q) {
    for (std::size_t r = 0; r < train_x.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < train_x.cols(); ++j) {
        const double d = test_x(q, j) - train_x(r, j);
        acc += d * d;
      }
      scratch[r] = {acc, r};
    }
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                      scratch.end());
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += train_y[scratch[i].second];
    preds[q] = mean / static_cast<double>(k);
  }
  return preds;
}

namespace {

QuantileRow summarize(Vec values) {
  std::sort(values.begin(), values.end());
  const auto at = [&](double p) {
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  QuantileRow row;
  row.min = values.front();
  row.q25 = at(0.25);
  row.median = at(0.5);
  row.q75 = at(0.75);
  row.max = values.back();
  return row;
}

}  // namespace

DistanceQuantiles distance_quantiles(const Dataset& ds, std::size_t n, unsigned threads) {
  if (ds.empty()) throw EmptyDatasetError("distance_quantiles: empty dataset");
  if (n == 0 || n >= ds.size()) {
    throw ConfigError("distance_quantiles: n must lie in [1, size - 1]");
  }
  const NormalizationStats stats = fit_normalization(ds);
  const Dataset norm = apply_normalization(ds, stats);
  const NeighborIndex index = build_neighbor_index(norm, norm, n, n, threads);

  Vec geo_means(ds.size(), 0.0);
  Vec euc_means(ds.size(), 0.0);
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    double geo_acc = 0.0;
    for (const auto& nb : index.entries[i].geo) geo_acc += nb.distance;
    geo_means[i] = geo_acc / static_cast<double>(n);
    double euc_acc = 0.0;
    for (const auto& nb : index.entries[i].euc) euc_acc += nb.distance;
    euc_means[i] = euc_acc / static_cast<double>(n);
  }

  DistanceQuantiles q;
  q.n = n;
  q.geodesic_km = summarize(std::move(geo_means));
  q.euclidean_norm = summarize(std::move(euc_means));
  return q;
}

Matrix feature_matrix(const Dataset& ds) {
  const std::size_t t = ds.descriptor.feature_count();
  Matrix x(ds.size(), t);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < t; ++j) x(i, j) = ds.records[i].features[j];
  }
  return x;
}

Vec price_vector(const Dataset& ds) {
  Vec y(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) y[i] = ds.records[i].price;
  return y;
}

namespace {

Matrix rows_matrix(const std::vector<const Vec*>& rows) {
  if (rows.empty()) return {};
  Matrix x(rows.size(), rows[0]->size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i]->size(); ++j) x(i, j) = (*rows[i])[j];
  }
  return x;
}

FoldTrainer matrix_trainer(
    const std::function<Vec(const Matrix&, const Vec&, const Matrix&)>& fit_predict,
    const std::unordered_map<std::int64_t, const Vec*>* embedding_by_id) {
  return [fit_predict, embedding_by_id](const Dataset& fold_train, const Dataset& fold_eval) {
    Matrix train_x, eval_x;
    if (embedding_by_id) {
      std::vector<const Vec*> train_rows, eval_rows;
      for (const auto& rec : fold_train.records) train_rows.push_back(embedding_by_id->at(rec.id));
      for (const auto& rec : fold_eval.records) eval_rows.push_back(embedding_by_id->at(rec.id));
      train_x = rows_matrix(train_rows);
      eval_x = rows_matrix(eval_rows);
    } else {
      train_x = feature_matrix(fold_train);
      eval_x = feature_matrix(fold_eval);
    }
    return fit_predict(train_x, price_vector(fold_train), eval_x);
  };
}

}  // namespace

std::vector<MetricReport> benchmark(const Dataset& ds, const TrainConfig& cfg,
                                    const BenchmarkOptions& opts) {
  validate_train_config(cfg);
  const std::string name = ds.descriptor.name;
  const bool log_scaled = ds.descriptor.price_is_log_scaled;

  const DatasetSplit split = split_dataset(ds, {0.7, 0.2, 0.1, cfg.seed});
  const NormalizationStats stats = fit_normalization(split.train);
  const Dataset train_norm = apply_normalization(split.train, stats);
  const Dataset test_norm = apply_normalization(split.test, stats);
  const Dataset val_norm = apply_normalization(split.val, stats);
  const Dataset full_norm = apply_normalization(ds, stats);

  // One index against the training pool serves every query subset.
  const NeighborIndex full_index =
      build_neighbor_index(full_norm, train_norm, cfg.num_geo, cfg.num_euc, opts.threads);

  const TrainResult trained =
      train(train_norm, val_norm, full_index, full_index, cfg, opts.threads);

  std::vector<MetricReport> reports;

  Vec test_preds;
  embed_dataset(test_norm, full_index, train_norm, trained.params, opts.threads, &test_preds);
  const Vec test_targets = price_vector(test_norm);
  MetricReport ours;
  ours.dataset = name;
  ours.model = "ours";
  ours.mode = "-";
  ours.male_best = male(test_preds, test_targets, log_scaled);
  ours.rmse_best = rmse_native(test_preds, test_targets, log_scaled);
  ours.n_folds = 1;
  ours.seed = cfg.seed;
  reports.push_back(ours);

  const auto ols_fit = [](const Matrix& tx, const Vec& ty, const Matrix& ex) {
    return baseline_ols(tx, ty, ex);
  };
  const auto knn_fit = [&](const Matrix& tx, const Vec& ty, const Matrix& ex) {
    return baseline_knn(tx, ty, ex, std::min(opts.knn_k, tx.rows()));
  };

  std::vector<HouseEmbedding> embeddings;
  std::unordered_map<std::int64_t, const Vec*> embedding_by_id;
  if (opts.embeddings) {
    embeddings = embed_dataset(full_norm, full_index, train_norm, trained.params, opts.threads);
    for (const auto& e : embeddings) embedding_by_id.emplace(e.house_id, &e.values);
  }

  if (opts.raw) {
    reports.push_back(kfold_cv(full_norm, opts.folds, matrix_trainer(ols_fit, nullptr),
                               cfg.seed, "ols", "raw"));
    reports.push_back(kfold_cv(full_norm, opts.folds, matrix_trainer(knn_fit, nullptr),
                               cfg.seed, "knn", "raw"));

    const FoldTrainer idw_trainer = [&](const Dataset& fold_train, const Dataset& fold_eval) {
      Vec preds(fold_eval.size(), 0.0);
      std::vector<std::pair<double, std::size_t>> scratch(fold_train.size());
      for (std::size_t q = 0; q < fold_eval.size(); ++q) {
        const GeoPoint target{fold_eval.records[q].lat, fold_eval.records[q].lon};
        for (std::size_t r = 0; r < fold_train.size(); ++r) {
          scratch[r] = {
              geodesic_distance(target, {fold_train.records[r].lat, fold_train.records[r].lon}),
              r};
        }
        const std::size_t k = std::min(cfg.num_geo, fold_train.size());
        std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                          scratch.end());
        Vec dists(k), prices(k);
        for (std::size_t i = 0; i < k; ++i) {
          dists[i] = scratch[i].first;
          prices[i] = fold_train.records[scratch[i].second].price;
        }
        preds[q] = idw_weighted(dists, prices, opts.idw_power);
      }
      return preds;
    };
    reports.push_back(kfold_cv(full_norm, opts.folds, idw_trainer, cfg.seed, "idw", "raw"));
  }

  if (opts.embeddings) {
    reports.push_back(kfold_cv(full_norm, opts.folds, matrix_trainer(ols_fit, &embedding_by_id),
                               cfg.seed, "ols", "embeddings"));
    reports.push_back(kfold_cv(full_norm, opts.folds, matrix_trainer(knn_fit, &embedding_by_id),
                               cfg.seed, "knn", "embeddings"));
  }
  return reports;
}

}  // namespace gam
