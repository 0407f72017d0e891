#include "gam/pipeline.hpp"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "gam/binio.hpp"
#include "gam/errors.hpp"
#include "gam/rng.hpp"
#include "gam/spatial.hpp"

namespace gam {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_json(const nlohmann::json& j, const std::string& path) {
  write_file_atomic(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_norm_stats(const NormalizationStats& stats, const std::string& path) {
  write_json(nlohmann::json{{"min", stats.min}, {"max", stats.max}}, path);
}

NormalizationStats load_norm_stats(const std::string& path) {
  const nlohmann::json j = read_json(path);
  NormalizationStats stats;
  try {
    stats.min = j.at("min").get<Vec>();
    stats.max = j.at("max").get<Vec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (stats.min.size() != stats.max.size()) throw FormatError(path + ": min/max arity mismatch");
  return stats;
}

NeighborIndex get_index(const Dataset& queries, const Dataset& pool, std::size_t num_geo,
                        std::size_t num_euc, const std::string& cache_path, bool allow_write,
                        unsigned threads) {
  if (!cache_path.empty() && fs::exists(cache_path)) {
    try {
      NeighborIndex cached = load_neighbor_index(cache_path);
      if (cached.queries_hash == dataset_hash(queries) && cached.pool_hash == dataset_hash(pool) &&
          cached.num_geo == num_geo && cached.num_euc == num_euc) {
        return cached;
      }
    } catch (const Error&) {
    }
  }
  NeighborIndex index = build_neighbor_index(queries, pool, num_geo, num_euc, threads);
  if (allow_write && !cache_path.empty()) save_neighbor_index(index, cache_path);
  return index;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.dataset = j.value("dataset", std::string());
  r.model = j.at("model").get<std::string>();
  r.mode = j.value("mode", std::string("raw"));
  r.male_best = j.at("male_best").get<double>();
  r.rmse_best = j.at("rmse_best").get<double>();
  if (j.contains("male_avg") && !j.at("male_avg").is_null()) {
    r.male_avg = j.at("male_avg").get<double>();
  }
  if (j.contains("rmse_avg") && !j.at("rmse_avg").is_null()) {
    r.rmse_avg = j.at("rmse_avg").get<double>();
  }
  r.n_folds = j.value("n_folds", std::size_t{1});
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j{{"dataset", r.dataset},   {"model", r.model},
                   {"mode", r.mode},         {"male_best", r.male_best},
                   {"rmse_best", r.rmse_best}, {"n_folds", r.n_folds},
                   {"seed", r.seed}};
  j["male_avg"] = r.male_avg ? nlohmann::json(*r.male_avg) : nlohmann::json();
  j["rmse_avg"] = r.rmse_avg ? nlohmann::json(*r.rmse_avg) : nlohmann::json();
  return j;
}

}  // namespace

void write_reports(const std::vector<MetricReport>& reports, const std::string& json_path,
                   const std::string& csv_path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  write_json(arr, json_path);

  std::ostringstream csv;
  csv << "dataset,model,mode,male_best,male_avg,rmse_best,rmse_avg\n";
  for (const auto& r : reports) {
    csv << r.dataset << ',' << r.model << ',' << r.mode << ',' << format_real(r.male_best) << ','
        << (r.male_avg ? format_real(*r.male_avg) : "") << ',' << format_real(r.rmse_best) << ','
        << (r.rmse_avg ? format_real(*r.rmse_avg) : "") << '\n';
  }
  write_file_atomic(csv_path, csv.str());
}

PrepareResult run_prepare(const PrepareOptions& opts) {
  const DatasetDescriptor descriptor = load_descriptor(opts.descriptor_json);
  const Dataset ds = load_csv(opts.dataset_csv, descriptor);
  ensure_dir(opts.out_dir);

  const DatasetSplit split = split_dataset(ds, opts.split);
  write_csv(split.train, join(opts.out_dir, "train.csv"));
  write_csv(split.test, join(opts.out_dir, "test.csv"));
  write_csv(split.val, join(opts.out_dir, "val.csv"));
  save_descriptor(descriptor, join(opts.out_dir, "descriptor.json"));

  const NormalizationStats stats = fit_normalization(split.train);
  save_norm_stats(stats, join(opts.out_dir, "norm_stats.json"));

  const Dataset train_norm = apply_normalization(split.train, stats);
  const Dataset test_norm = apply_normalization(split.test, stats);
  const Dataset val_norm = apply_normalization(split.val, stats);

  const NeighborIndex train_index =
      build_neighbor_index(train_norm, train_norm, opts.num_geo, opts.num_euc, opts.threads);
  save_neighbor_index(train_index, join(opts.out_dir, "index_train.nidx"));
  const NeighborIndex test_index =
      build_neighbor_index(test_norm, train_norm, opts.num_geo, opts.num_euc, opts.threads);
  save_neighbor_index(test_index, join(opts.out_dir, "index_test.nidx"));
  const NeighborIndex val_index =
      build_neighbor_index(val_norm, train_norm, opts.num_geo, opts.num_euc, opts.threads);
  save_neighbor_index(val_index, join(opts.out_dir, "index_val.nidx"));

  write_json(nlohmann::json{{"command", "prepare"},
                            {"created_at", created_at_string()},
                            {"dataset_csv", opts.dataset_csv},
                            {"descriptor", descriptor_to_json(descriptor)},
                            {"split",
                             {{"train_fraction", opts.split.train_fraction},
                              {"test_fraction", opts.split.test_fraction},
                              {"val_fraction", opts.split.val_fraction},
                              {"seed", opts.split.seed}}},
                            {"num_geo", opts.num_geo},
                            {"num_euc", opts.num_euc},
                            {"train_hash", dataset_hash(split.train)},
                            {"test_hash", dataset_hash(split.test)},
                            {"val_hash", dataset_hash(split.val)}},
             join(opts.out_dir, "manifest.json"));

  return {split.train.size(), split.test.size(), split.val.size()};
}

TrainRunResult run_train(const TrainOptions& opts) {
  validate_train_config(opts.cfg);
  const std::string model_out =
      opts.model_out.empty() ? join(opts.prepared_dir, "model.gam") : opts.model_out;
  const std::string log_out =
      opts.log_out.empty() ? join(opts.prepared_dir, "train_log.jsonl") : opts.log_out;

  const DatasetDescriptor descriptor = load_descriptor(join(opts.prepared_dir, "descriptor.json"));
  const Dataset train_raw = load_csv(join(opts.prepared_dir, "train.csv"), descriptor);
  const Dataset val_raw = load_csv(join(opts.prepared_dir, "val.csv"), descriptor);
  const NormalizationStats stats = load_norm_stats(join(opts.prepared_dir, "norm_stats.json"));

  const Dataset train_norm = apply_normalization(train_raw, stats);
  const Dataset val_norm = apply_normalization(val_raw, stats);

  const NeighborIndex train_index =
      get_index(train_norm, train_norm, opts.cfg.num_geo, opts.cfg.num_euc,
                join(opts.prepared_dir, "index_train.nidx"), true, opts.threads);
  const NeighborIndex val_index =
      get_index(val_norm, train_norm, opts.cfg.num_geo, opts.cfg.num_euc,
                join(opts.prepared_dir, "index_val.nidx"), true, opts.threads);

  const TrainResult result = train(train_norm, val_norm, train_index, val_index, opts.cfg,
                                   opts.threads);

  ModelArtifact artifact;
  artifact.created_at = created_at_string();
  artifact.dataset_hash = dataset_hash(train_raw);
  artifact.config = opts.cfg;
  artifact.descriptor = descriptor;
  artifact.stats = stats;
  artifact.params = result.params;
  artifact.log_digest = training_log_digest(result.log);
  save_model(artifact, model_out);

  std::ostringstream log_lines;
  for (const auto& e : result.log) {
    log_lines << nlohmann::json{{"epoch", e.epoch},
                                {"train_loss", e.train_loss},
                                {"val_male", e.val_male},
                                {"val_rmse", e.val_rmse},
                                {"wall_ms", e.wall_ms}}
                     .dump()
              << '\n';
  }
  write_file_atomic(log_out, log_lines.str());

  write_json(nlohmann::json{{"command", "train"},
                            {"created_at", created_at_string()},
                            {"prepared_dir", opts.prepared_dir},
                            {"config", config_to_json(opts.cfg)},
                            {"model", model_out},
                            {"epochs_run", result.log.size()},
                            {"best_epoch", result.best_epoch},
                            {"best_val_male", result.best_val_male},
                            {"train_hash", artifact.dataset_hash}},
             (fs::path(model_out).parent_path() / "train_manifest.json").string());

  return {model_out, result.log.size(), result.best_epoch, result.best_val_male};
}

EvaluateResult run_evaluate(const EvaluateOptions& opts) {
  const ModelArtifact artifact = load_model(opts.model_path);
  const std::string metrics_out =
      opts.metrics_out.empty() ? join(opts.prepared_dir, "metrics.json") : opts.metrics_out;

  const Dataset train_raw = load_csv(join(opts.prepared_dir, "train.csv"), artifact.descriptor);
  const Dataset test_raw = load_csv(join(opts.prepared_dir, "test.csv"), artifact.descriptor);

  EvaluateResult result;
  result.hash_mismatch = dataset_hash(train_raw) != artifact.dataset_hash;

  const Dataset train_norm = apply_normalization(train_raw, artifact.stats);
  const Dataset test_norm = apply_normalization(test_raw, artifact.stats);
  const NeighborIndex test_index =
      get_index(test_norm, train_norm, artifact.config.num_geo, artifact.config.num_euc,
                join(opts.prepared_dir, "index_test.nidx"), false, opts.threads);

  Vec preds;
  embed_dataset(test_norm, test_index, train_norm, artifact.params, opts.threads, &preds);
  const Vec targets = price_vector(test_norm);
  const bool log_scaled = artifact.descriptor.price_is_log_scaled;
  result.male = male(preds, targets, log_scaled);
  result.rmse = rmse_native(preds, targets, log_scaled);
  result.n_test = test_norm.size();

  write_json(nlohmann::json{{"male", result.male},
                            {"rmse", result.rmse},
                            {"n_test", result.n_test},
                            {"dataset", artifact.descriptor.name},
                            {"model", opts.model_path},
                            {"hash_mismatch", result.hash_mismatch}},
             metrics_out);
  return result;
}

std::size_t run_embed(const EmbedOptions& opts) {
  const ModelArtifact artifact = load_model(opts.model_path);
  const std::string out = opts.embeddings_out.empty() ? join(opts.prepared_dir, "embeddings.csv")
                                                      : opts.embeddings_out;

  const Dataset train_raw = load_csv(join(opts.prepared_dir, "train.csv"), artifact.descriptor);
  Dataset input;
  if (!opts.input_csv.empty()) {
    input = load_csv(opts.input_csv, artifact.descriptor);
  } else {
    input = train_raw;
    for (const auto& name : {"test.csv", "val.csv"}) {
      const Dataset part = load_csv(join(opts.prepared_dir, name), artifact.descriptor);
      input.records.insert(input.records.end(), part.records.begin(), part.records.end());
    }
  }

  const Dataset train_norm = apply_normalization(train_raw, artifact.stats);
  const Dataset input_norm = apply_normalization(input, artifact.stats);
  const NeighborIndex index =
      get_index(input_norm, train_norm, artifact.config.num_geo, artifact.config.num_euc, "",
                false, opts.threads);

  const std::vector<HouseEmbedding> embeddings =
      embed_dataset(input_norm, index, train_norm, artifact.params, opts.threads);

  std::ostringstream csv;
  csv << "id";
  for (std::size_t j = 0; j < artifact.params.nodes(); ++j) csv << ",e_" << (j + 1);
  csv << '\n';
  for (const auto& e : embeddings) {
    csv << e.house_id;
    for (double v : e.values) csv << ',' << format_real(v);
    csv << '\n';
  }
  write_file_atomic(out, csv.str());
  return embeddings.size();
}

std::vector<MetricReport> run_benchmark(const BenchmarkRunOptions& opts) {
  const DatasetDescriptor descriptor = load_descriptor(opts.descriptor_json);
  Dataset ds = load_csv(opts.dataset_csv, descriptor);
  ensure_dir(opts.out_dir);

  std::vector<MetricReport> reports = benchmark(ds, opts.cfg, opts.bench);
  if (!opts.extra_rows_json.empty()) {
    const nlohmann::json extra = read_json(opts.extra_rows_json);
    if (!extra.is_array()) throw FormatError(opts.extra_rows_json + ": expected a JSON array");
    for (const auto& row : extra) {
      MetricReport r = report_from_json(row);
      if (r.dataset.empty()) r.dataset = descriptor.name;
      reports.push_back(std::move(r));
    }
  }

  write_reports(reports, join(opts.out_dir, "report.json"), join(opts.out_dir, "report.csv"));
  write_json(nlohmann::json{{"command", "benchmark"},
                            {"created_at", created_at_string()},
                            {"dataset_csv", opts.dataset_csv},
                            {"config", config_to_json(opts.cfg)},
                            {"folds", opts.bench.folds},
                            {"knn_k", opts.bench.knn_k},
                            {"idw_power", opts.bench.idw_power}},
             join(opts.out_dir, "manifest.json"));
  return reports;
}

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t feature_count,
                                        std::size_t neighbors, std::size_t heads,
                                        std::size_t nodes) {
  TrainConfig cfg;
  cfg.num_geo = neighbors;
  cfg.num_euc = neighbors;
  cfg.num_heads = heads;
  cfg.nodes = nodes;
  cfg.sigma = 2.0;
  cfg.similarity_kind = SimilarityKind::gaussian;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 1;
  cfg.seed = seed;

  GradcheckFixture fixture;
  fixture.params = init_params(cfg, feature_count);

  Rng rng(seed ^ 0xabcdef12345ULL);
  // Push biases and aggregation gates off their symmetric zero points.
  for (auto* block : {&fixture.params.geo_block, &fixture.params.euc_block}) {
    for (auto& head : block->heads) {
      for (auto& v : head.b_sim) v = rng.uniform(-0.3, 0.3);
      for (auto& v : head.b_gate) v = rng.uniform(-0.3, 0.3);
    }
    for (auto& v : block->agg.weight) v = rng.uniform(-0.5, 0.5);
    for (auto& v : block->agg.bias) v = rng.uniform(-0.5, 0.5);
  }
  for (auto& v : fixture.params.b_hidden) v = rng.uniform(-0.2, 0.2);
  fixture.params.b_out = rng.uniform(-0.2, 0.2);
  fixture.params.geo_block.distance_scale = 1.0;
  fixture.params.geo_block.lat_offset = 45.03;
  fixture.params.geo_block.lat_scale = 25.0;
  fixture.params.geo_block.lon_offset = 9.08;
  fixture.params.geo_block.lon_scale = 25.0;
  // Keep every output-layer direction informative for the difference check.
  for (auto& v : fixture.params.w_out) v += v >= 0.0 ? 0.1 : -0.1;

  // Target plus neighbor features; storage is filled before spans are taken.
  fixture.feature_storage.resize(1 + 2 * neighbors);
  for (auto& row : fixture.feature_storage) {
    row.resize(feature_count);
    for (auto& v : row) v = rng.uniform01();
  }

  SampleView& sample = fixture.sample;
  sample.target_features = fixture.feature_storage[0];
  sample.target_point = {45.05, 9.10};
  for (std::size_t j = 0; j < neighbors; ++j) {
    const GeoPoint coord{45.05 + rng.uniform(-0.02, 0.02), 9.10 + rng.uniform(-0.02, 0.02)};
    sample.geo.coords.push_back(coord);
    sample.geo.features.push_back(fixture.feature_storage[1 + j]);
    sample.geo.prices.push_back(rng.uniform(0.5, 2.0));
    sample.geo.distances.push_back(geodesic_distance(sample.target_point, coord));

    const auto& euc_row = fixture.feature_storage[1 + neighbors + j];
    sample.euc.features.push_back(euc_row);
    sample.euc.prices.push_back(rng.uniform(0.5, 2.0));
    sample.euc.distances.push_back(
        euclidean_distance(sample.target_features, euc_row));
  }
  return fixture;
}

double run_gradcheck(const GradcheckOptions& opts) {
  const GradcheckFixture fixture = make_gradcheck_fixture(opts.seed);
  return gradient_check(fixture.params, fixture.sample, opts.epsilon).max_rel_err;
}

DistanceQuantiles run_quantiles(const QuantileRunOptions& opts) {
  const DatasetDescriptor descriptor = load_descriptor(opts.descriptor_json);
  const Dataset ds = load_csv(opts.dataset_csv, descriptor);
  const DistanceQuantiles q = distance_quantiles(ds, opts.n, opts.threads);

  std::ostringstream csv;
  csv << "kind,min,q25,median,q75,max\n";
  const auto row = [&](const std::string& kind, const QuantileRow& r) {
    csv << kind << ',' << format_real(r.min) << ',' << format_real(r.q25) << ','
        << format_real(r.median) << ',' << format_real(r.q75) << ',' << format_real(r.max)
        << '\n';
  };
  row("geodesic_km", q.geodesic_km);
  row("euclidean_norm", q.euclidean_norm);
  write_file_atomic(opts.out_csv, csv.str());
  return q;
}

void run_synth(const SynthOptions& opts) {
  ensure_dir(opts.out_dir);
  Dataset ds = synthesize_dataset(opts.n, opts.num_features, opts.spatial_weight, opts.noise_sd,
                                  opts.seed);
  if (opts.log_prices) ds = with_log_prices(ds);
  write_csv(ds, join(opts.out_dir, "data.csv"));
  save_descriptor(ds.descriptor, join(opts.out_dir, "descriptor.json"));
}

}  // namespace gam
