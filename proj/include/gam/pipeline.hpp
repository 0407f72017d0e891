#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gam/dataset.hpp"
#include "gam/evaluation.hpp"
#include "gam/persistence.hpp"
#include "gam/training.hpp"

namespace gam {

// Command implementations shared by the CLI and the test suites. Each one
// writes its outputs under a directory and is deterministic for fixed seeds.

struct PrepareOptions {
  std::string dataset_csv;
  std::string descriptor_json;
  std::string out_dir;
  SplitSpec split;
  std::size_t num_geo = 30;
  std::size_t num_euc = 30;
  unsigned threads = 0;
};

struct PrepareResult {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_val = 0;
};

PrepareResult run_prepare(const PrepareOptions& opts);

struct TrainOptions {
  std::string prepared_dir;
  TrainConfig cfg;
  std::string model_out;  // defaults to <prepared_dir>/model.gam
  std::string log_out;    // defaults to <prepared_dir>/train_log.jsonl
  unsigned threads = 0;
};

struct TrainRunResult {
  std::string model_path;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_male = 0.0;
};

TrainRunResult run_train(const TrainOptions& opts);

struct EvaluateOptions {
  std::string model_path;
  std::string prepared_dir;
  std::string metrics_out;  // defaults to <prepared_dir>/metrics.json
  unsigned threads = 0;
};

struct EvaluateResult {
  double male = 0.0;
  double rmse = 0.0;
  std::size_t n_test = 0;
  bool hash_mismatch = false;
};

EvaluateResult run_evaluate(const EvaluateOptions& opts);

struct EmbedOptions {
  std::string model_path;
  std::string prepared_dir;
  std::string input_csv;  // optional; defaults to train+test+val splits
  std::string embeddings_out;
  unsigned threads = 0;
};

std::size_t run_embed(const EmbedOptions& opts);

struct BenchmarkRunOptions {
  std::string dataset_csv;
  std::string descriptor_json;
  std::string out_dir;
  TrainConfig cfg;
  BenchmarkOptions bench;
  std::string extra_rows_json;  // optional externally supplied report rows
};

std::vector<MetricReport> run_benchmark(const BenchmarkRunOptions& opts);

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double epsilon = 1e-5;
};

double run_gradcheck(const GradcheckOptions& opts);

struct QuantileRunOptions {
  std::string dataset_csv;
  std::string descriptor_json;
  std::string out_csv;
  std::size_t n = 60;
  unsigned threads = 0;
};

DistanceQuantiles run_quantiles(const QuantileRunOptions& opts);

struct SynthOptions {
  std::string out_dir;
  std::size_t n = 2000;
  std::size_t num_features = 4;
  double spatial_weight = 1.2;
  double noise_sd = 0.05;
  std::uint64_t seed = 7;
  bool log_prices = true;
};

void run_synth(const SynthOptions& opts);

// Writes reports both as JSON and as the flat CSV layout.
void write_reports(const std::vector<MetricReport>& reports, const std::string& json_path,
                   const std::string& csv_path);

// Builds a deterministic seeded gradient-check fixture (tiny model + sample).
struct GradcheckFixture {
  ModelParams params;
  SampleView sample;
  // Owned storage backing the sample's spans.
  std::vector<Vec> feature_storage;
};

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t feature_count = 4,
                                        std::size_t neighbors = 5, std::size_t heads = 2,
                                        std::size_t nodes = 8);

}  // namespace gam
