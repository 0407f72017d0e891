#include "gam/persistence.hpp"

#include <cstdlib>
#include <ctime>

#include "gam/binio.hpp"
#include "gam/errors.hpp"

namespace gam {

namespace {

constexpr char kArtifactMagic[4] = {'G', 'A', 'M', 'F'};
constexpr std::uint32_t kArtifactVersion = 1;

// Parameter tensors with shapes implied by the config and feature count.
ModelParams make_params_skeleton(const TrainConfig& cfg, std::size_t feature_count) {
  auto make_block = [&](Mechanism mechanism, std::size_t n) {
    AttentionBlockParams block;
    block.mechanism = mechanism;
    block.similarity_kind = cfg.similarity_kind;
    block.sigma = cfg.sigma;
    block.heads.resize(cfg.num_heads);
    for (auto& head : block.heads) {
      head.w_sim = Matrix(n, n);
      head.b_sim.assign(n, 0.0);
      head.w_gate = Matrix(n, n);
      head.b_gate.assign(n, 0.0);
    }
    block.agg.weight.assign(cfg.num_heads, 0.0);
    block.agg.bias.assign(cfg.num_heads, 0.0);
    return block;
  };
  ModelParams params;
  params.geo_block = make_block(Mechanism::geo, cfg.num_geo);
  params.euc_block = make_block(Mechanism::euc, cfg.num_euc);
  params.w_hidden = Matrix(cfg.nodes, 3 * feature_count + 7);
  params.b_hidden.assign(cfg.nodes, 0.0);
  params.w_out.assign(cfg.nodes, 0.0);
  params.b_out = 0.0;
  return params;
}

}  // namespace

std::string similarity_kind_name(SimilarityKind kind) {
  return kind == SimilarityKind::gaussian ? "gaussian" : "identity";
}

SimilarityKind similarity_kind_from_name(const std::string& name) {
  if (name == "gaussian") return SimilarityKind::gaussian;
  if (name == "identity") return SimilarityKind::identity;
  throw ConfigError("unknown similarity kind '" + name + "' (identity|gaussian)");
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::linear:
      return "linear";
    case Activation::relu:
      return "relu";
    case Activation::elu:
      return "elu";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  throw FormatError("unknown activation '" + name + "'");
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  return {{"num_geo", cfg.num_geo},
          {"num_euc", cfg.num_euc},
          {"num_heads", cfg.num_heads},
          {"sigma", cfg.sigma},
          {"nodes", cfg.nodes},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"similarity", similarity_kind_name(cfg.similarity_kind)},
          {"max_epochs", cfg.max_epochs},
          {"patience", cfg.patience},
          {"seed", cfg.seed}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.num_geo = j.at("num_geo").get<std::size_t>();
  cfg.num_euc = j.at("num_euc").get<std::size_t>();
  cfg.num_heads = j.at("num_heads").get<std::size_t>();
  cfg.sigma = j.at("sigma").get<double>();
  cfg.nodes = j.at("nodes").get<std::size_t>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.similarity_kind = similarity_kind_from_name(j.at("similarity").get<std::string>());
  cfg.max_epochs = j.at("max_epochs").get<std::size_t>();
  cfg.patience = j.at("patience").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

nlohmann::json descriptor_to_json(const DatasetDescriptor& d) {
  return {{"name", d.name},
          {"feature_names", d.feature_names},
          {"price_is_log_scaled", d.price_is_log_scaled},
          {"currency_label", d.currency_label}};
}

DatasetDescriptor descriptor_from_json(const nlohmann::json& j) {
  DatasetDescriptor d;
  d.name = j.at("name").get<std::string>();
  d.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  d.price_is_log_scaled = j.at("price_is_log_scaled").get<bool>();
  d.currency_label = j.value("currency_label", std::string());
  return d;
}

std::uint64_t training_log_digest(const std::vector<EpochLog>& log) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& e : log) {
    const std::uint64_t epoch = e.epoch;
    h = fnv1a(&epoch, sizeof(epoch), h);
    h = fnv1a(&e.train_loss, sizeof(double), h);
    h = fnv1a(&e.val_male, sizeof(double), h);
    h = fnv1a(&e.val_rmse, sizeof(double), h);
  }
  return h;
}

std::string created_at_string() {
  std::time_t stamp = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    stamp = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  }
  std::tm tm_utc{};
  gmtime_r(&stamp, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void save_model(const ModelArtifact& artifact, const std::string& path) {
  const std::size_t t = artifact.descriptor.feature_count();
  const std::size_t n_params = param_count(artifact.params);

  nlohmann::json header{
      {"format_version", artifact.format_version},
      {"created_at", artifact.created_at},
      {"dataset_hash", artifact.dataset_hash},
      {"log_digest", artifact.log_digest},
      {"config", config_to_json(artifact.config)},
      {"descriptor", descriptor_to_json(artifact.descriptor)},
      {"geo_distance_scale", artifact.params.geo_block.distance_scale},
      {"euc_distance_scale", artifact.params.euc_block.distance_scale},
      {"coord_scaler",
       {{"lat_offset", artifact.params.geo_block.lat_offset},
        {"lat_scale", artifact.params.geo_block.lat_scale},
        {"lon_offset", artifact.params.geo_block.lon_offset},
        {"lon_scale", artifact.params.geo_block.lon_scale}}},
      {"hidden_activation", activation_name(artifact.params.hidden_activation)},
      {"output_activation", activation_name(artifact.params.output_activation)},
      {"arrays",
       nlohmann::json::array({nlohmann::json{{"name", "stats_min"}, {"count", t}},
                              nlohmann::json{{"name", "stats_max"}, {"count", t}},
                              nlohmann::json{{"name", "params"}, {"count", n_params}}})}};
  const std::string header_str = header.dump();

  if (artifact.stats.min.size() != t || artifact.stats.max.size() != t) {
    throw StateError("save_model: normalization stats do not match descriptor arity");
  }

  Vec flat;
  flat.reserve(n_params);
  for_each_param(artifact.params, [&](double v) { flat.push_back(v); });

  std::string bytes;
  append_bytes(bytes, kArtifactMagic, sizeof(kArtifactMagic));
  append_scalar<std::uint32_t>(bytes, static_cast<std::uint32_t>(header_str.size()));
  bytes += header_str;
  append_f64_array(bytes, artifact.stats.min);
  append_f64_array(bytes, artifact.stats.max);
  append_f64_array(bytes, flat);
  write_file_atomic(path, bytes);
}

ModelArtifact load_model(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader reader(bytes, "model artifact " + path);

  const std::string magic = reader.read_bytes(4);
  if (std::string(kArtifactMagic, 4) != magic) {
    throw FormatError(path + ": not a model artifact");
  }
  const auto header_len = reader.read_scalar<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(reader.read_bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }

  ModelArtifact artifact;
  try {
    artifact.format_version = header.at("format_version").get<std::uint32_t>();
    if (artifact.format_version != kArtifactVersion) {
      throw VersionError(path + ": file version " + std::to_string(artifact.format_version) +
                         ", reader supports version " + std::to_string(kArtifactVersion));
    }
    artifact.created_at = header.at("created_at").get<std::string>();
    artifact.dataset_hash = header.at("dataset_hash").get<std::uint64_t>();
    artifact.log_digest = header.at("log_digest").get<std::uint64_t>();
    artifact.config = config_from_json(header.at("config"));
    artifact.descriptor = descriptor_from_json(header.at("descriptor"));

    const std::size_t t = artifact.descriptor.feature_count();
    artifact.params = make_params_skeleton(artifact.config, t);
    artifact.params.geo_block.distance_scale = header.at("geo_distance_scale").get<double>();
    artifact.params.euc_block.distance_scale = header.at("euc_distance_scale").get<double>();
    const auto& scaler = header.at("coord_scaler");
    artifact.params.geo_block.lat_offset = scaler.at("lat_offset").get<double>();
    artifact.params.geo_block.lat_scale = scaler.at("lat_scale").get<double>();
    artifact.params.geo_block.lon_offset = scaler.at("lon_offset").get<double>();
    artifact.params.geo_block.lon_scale = scaler.at("lon_scale").get<double>();
    artifact.params.hidden_activation =
        activation_from_name(header.at("hidden_activation").get<std::string>());
    artifact.params.output_activation =
        activation_from_name(header.at("output_activation").get<std::string>());

    const auto& arrays = header.at("arrays");
    if (arrays.size() != 3 || arrays[0].at("name") != "stats_min" ||
        arrays[1].at("name") != "stats_max" || arrays[2].at("name") != "params") {
      throw FormatError(path + ": unexpected array manifest");
    }
    const auto expect_params = arrays[2].at("count").get<std::size_t>();
    if (expect_params != param_count(artifact.params)) {
      throw FormatError(path + ": parameter payload of " + std::to_string(expect_params) +
                        " values does not match the config's shapes (" +
                        std::to_string(param_count(artifact.params)) + ")");
    }

    artifact.stats.min = reader.read_f64_array(t);
    artifact.stats.max = reader.read_f64_array(t);
    const Vec flat = reader.read_f64_array(expect_params);
    std::size_t i = 0;
    for_each_param(artifact.params, [&](double& v) { v = flat[i++]; });
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }
  if (!reader.at_end()) throw FormatError(path + ": trailing bytes after payload");

  if (artifact.params.geo_block.distance_scale <= 0.0) {
    throw FormatError(path + ": non-positive geo distance scale");
  }
  return artifact;
}

}  // namespace gam
