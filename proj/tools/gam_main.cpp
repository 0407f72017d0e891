#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gam/errors.hpp"
#include "gam/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct TrainFlags {
  std::string preset;
  std::size_t num_heads = 0;
  double sigma = 0.0;
  std::size_t nearest_geo = 0;
  std::size_t nearest_euclid = 0;
  std::size_t nodes = 0;
  double lr = 0.0;
  std::size_t batch_size = 0;
  std::string similarity;
  std::size_t max_epochs = 0;
  std::size_t patience = 0;
  std::uint64_t seed = 0;
};

void add_hyper_flags(CLI::App* cmd, TrainFlags& flags) {
  cmd->add_option("--preset", flags.preset, "named hyperparameter set (it|kc|poa|bj)");
  cmd->add_option("--num-heads", flags.num_heads, "attention heads per mechanism");
  cmd->add_option("--sigma", flags.sigma, "geo kernel width");
  cmd->add_option("--nearest-geo", flags.nearest_geo, "geodesic neighbor count");
  cmd->add_option("--nearest-euclid", flags.nearest_euclid, "structural neighbor count");
  cmd->add_option("--nodes", flags.nodes, "embedding layer width");
  cmd->add_option("--lr", flags.lr, "learning rate");
  cmd->add_option("--batch-size", flags.batch_size, "mini-batch size");
  cmd->add_option("--similarity", flags.similarity, "similarity kind (identity|gaussian)");
  cmd->add_option("--max-epochs", flags.max_epochs, "epoch cap");
  cmd->add_option("--patience", flags.patience, "early-stopping patience");
  cmd->add_option("--seed", flags.seed, "run seed");
}

gam::TrainConfig resolve_config(const CLI::App* cmd, const TrainFlags& flags) {
  gam::TrainConfig cfg;
  if (!flags.preset.empty()) cfg = gam::preset_config(flags.preset);
  if (cmd->count("--num-heads")) cfg.num_heads = flags.num_heads;
  if (cmd->count("--sigma")) cfg.sigma = flags.sigma;
  if (cmd->count("--nearest-geo")) cfg.num_geo = flags.nearest_geo;
  if (cmd->count("--nearest-euclid")) cfg.num_euc = flags.nearest_euclid;
  if (cmd->count("--nodes")) cfg.nodes = flags.nodes;
  if (cmd->count("--lr")) cfg.learning_rate = flags.lr;
  if (cmd->count("--batch-size")) cfg.batch_size = flags.batch_size;
  if (cmd->count("--similarity")) {
    cfg.similarity_kind = gam::similarity_kind_from_name(flags.similarity);
  }
  if (cmd->count("--max-epochs")) cfg.max_epochs = flags.max_epochs;
  if (cmd->count("--patience")) cfg.patience = flags.patience;
  if (cmd->count("--seed")) cfg.seed = flags.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated-attention spatial interpolation for house prices"};
  app.require_subcommand(1);

  unsigned threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = all cores)");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "split a dataset and build neighbor indices");
  gam::PrepareOptions prep_opts;
  prepare->add_option("--dataset", prep_opts.dataset_csv, "input CSV")->required();
  prepare->add_option("--descriptor", prep_opts.descriptor_json, "dataset descriptor JSON")
      ->required();
  prepare->add_option("--out", prep_opts.out_dir, "output directory")->required();
  prepare->add_option("--seed", prep_opts.split.seed, "shuffle seed");
  prepare->add_option("--train-frac", prep_opts.split.train_fraction, "training fraction");
  prepare->add_option("--test-frac", prep_opts.split.test_fraction, "test fraction");
  prepare->add_option("--val-frac", prep_opts.split.val_fraction, "validation fraction");
  prepare->add_option("--nearest-geo", prep_opts.num_geo, "geodesic neighbor count");
  prepare->add_option("--nearest-euclid", prep_opts.num_euc, "structural neighbor count");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a prepared directory");
  gam::TrainOptions train_opts;
  TrainFlags train_flags;
  train_cmd->add_option("--prepared", train_opts.prepared_dir, "prepared directory")->required();
  train_cmd->add_option("--out", train_opts.model_out, "model artifact path (.gam)");
  train_cmd->add_option("--log", train_opts.log_out, "training log path (JSONL)");
  add_hyper_flags(train_cmd, train_flags);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a model on the test split");
  gam::EvaluateOptions eval_opts;
  evaluate->add_option("--model", eval_opts.model_path, "model artifact")->required();
  evaluate->add_option("--prepared", eval_opts.prepared_dir, "prepared directory")->required();
  evaluate->add_option("--out", eval_opts.metrics_out, "metrics JSON path");

  // embed
  auto* embed = app.add_subcommand("embed", "export house embeddings as CSV");
  gam::EmbedOptions embed_opts;
  embed->add_option("--model", embed_opts.model_path, "model artifact")->required();
  embed->add_option("--prepared", embed_opts.prepared_dir, "prepared directory")->required();
  embed->add_option("--input", embed_opts.input_csv, "records to embed (default: all splits)");
  embed->add_option("--out", embed_opts.embeddings_out, "output CSV path");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "attention model vs classical baselines");
  gam::BenchmarkRunOptions bench_opts;
  TrainFlags bench_flags;
  bench->add_option("--dataset", bench_opts.dataset_csv, "input CSV")->required();
  bench->add_option("--descriptor", bench_opts.descriptor_json, "dataset descriptor JSON")
      ->required();
  bench->add_option("--out", bench_opts.out_dir, "output directory")->required();
  bench->add_option("--folds", bench_opts.bench.folds, "cross-validation folds");
  bench->add_option("--knn-k", bench_opts.bench.knn_k, "k for the kNN baseline");
  bench->add_option("--idw-power", bench_opts.bench.idw_power, "IDW power");
  bench->add_option("--extra-rows", bench_opts.extra_rows_json,
                    "JSON file with externally supplied report rows");
  add_hyper_flags(bench, bench_flags);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gam::GradcheckOptions grad_opts;
  gradcheck->add_option("--seed", grad_opts.seed, "fixture seed");
  gradcheck->add_option("--epsilon", grad_opts.epsilon, "finite-difference step");

  // quantiles
  auto* quantiles = app.add_subcommand("quantiles", "neighbor distance quantile table");
  gam::QuantileRunOptions quant_opts;
  quantiles->add_option("--dataset", quant_opts.dataset_csv, "input CSV")->required();
  quantiles->add_option("--descriptor", quant_opts.descriptor_json, "dataset descriptor JSON")
      ->required();
  quantiles->add_option("--out", quant_opts.out_csv, "output CSV path")->required();
  quantiles->add_option("--n", quant_opts.n, "neighbors per house");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic spatial dataset");
  gam::SynthOptions synth_opts;
  bool raw_prices = false;
  synth->add_option("--out", synth_opts.out_dir, "output directory")->required();
  synth->add_option("--n", synth_opts.n, "record count");
  synth->add_option("--features", synth_opts.num_features, "structural feature count");
  synth->add_option("--spatial-weight", synth_opts.spatial_weight, "spatial signal weight");
  synth->add_option("--noise-sd", synth_opts.noise_sd, "log-price noise sd");
  synth->add_option("--seed", synth_opts.seed, "generator seed");
  synth->add_flag("--raw-prices", raw_prices, "keep prices in raw scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) {
      prep_opts.threads = threads;
      const gam::PrepareResult r = gam::run_prepare(prep_opts);
      std::cout << "prepared " << prep_opts.out_dir << ": train=" << r.n_train
                << " test=" << r.n_test << " val=" << r.n_val << "\n";
    } else if (*train_cmd) {
      try {
        train_opts.cfg = resolve_config(train_cmd, train_flags);
      } catch (const gam::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
      }
      train_opts.threads = threads;
      const gam::TrainRunResult r = gam::run_train(train_opts);
      std::cout << "trained " << r.model_path << ": epochs=" << r.epochs_run
                << " best_epoch=" << r.best_epoch << " best_val_male=" << r.best_val_male << "\n";
    } else if (*evaluate) {
      eval_opts.threads = threads;
      const gam::EvaluateResult r = gam::run_evaluate(eval_opts);
      if (r.hash_mismatch) {
        std::cerr << "warning: prepared data does not match the hash recorded in the artifact\n";
      }
      std::cout << "male=" << gam::format_real(r.male) << " rmse=" << gam::format_real(r.rmse)
                << " n_test=" << r.n_test << "\n";
    } else if (*embed) {
      embed_opts.threads = threads;
      const std::size_t n = gam::run_embed(embed_opts);
      std::cout << "embedded " << n << " records\n";
    } else if (*bench) {
      try {
        bench_opts.cfg = resolve_config(bench, bench_flags);
      } catch (const gam::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
      }
      bench_opts.bench.threads = threads;
      const auto reports = gam::run_benchmark(bench_opts);
      for (const auto& r : reports) {
        std::cout << r.model << '/' << r.mode << ": male_best=" << gam::format_real(r.male_best)
                  << " rmse_best=" << gam::format_real(r.rmse_best) << "\n";
      }
    } else if (*gradcheck) {
      const double err = gam::run_gradcheck(grad_opts);
      std::cout << "max_rel_err=" << gam::format_real(err) << "\n";
      return err < 1e-4 ? kExitOk : kExitRuntime;
    } else if (*quantiles) {
      quant_opts.threads = threads;
      const gam::DistanceQuantiles q = gam::run_quantiles(quant_opts);
      std::cout << "geodesic_km median=" << gam::format_real(q.geodesic_km.median)
                << " euclidean_norm median=" << gam::format_real(q.euclidean_norm.median) << "\n";
    } else if (*synth) {
      synth_opts.log_prices = !raw_prices;
      gam::run_synth(synth_opts);
      std::cout << "wrote synthetic dataset to " << synth_opts.out_dir << "\n";
    }
  } catch (const gam::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
