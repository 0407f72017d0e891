#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "gam/dataset.hpp"
#include "gam/model.hpp"
#include "gam/training.hpp"

namespace gam {

// Self-describing single-file model artifact (.gam): JSON header plus
// length-prefixed little-endian double arrays, written atomically.
struct ModelArtifact {
  std::uint32_t format_version = 1;
  std::string created_at;
  std::uint64_t dataset_hash = 0;
  TrainConfig config;
  DatasetDescriptor descriptor;
  NormalizationStats stats;
  ModelParams params;
  std::uint64_t log_digest = 0;
};

void save_model(const ModelArtifact& artifact, const std::string& path);
ModelArtifact load_model(const std::string& path);

// Digest over the deterministic per-epoch fields (wall time excluded).
std::uint64_t training_log_digest(const std::vector<EpochLog>& log);

// ISO-8601 UTC stamp from SOURCE_DATE_EPOCH when set, else the Unix epoch, so
// outputs are byte-reproducible by default.
std::string created_at_string();

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json descriptor_to_json(const DatasetDescriptor& d);
DatasetDescriptor descriptor_from_json(const nlohmann::json& j);

std::string similarity_kind_name(SimilarityKind kind);
SimilarityKind similarity_kind_from_name(const std::string& name);
std::string activation_name(Activation act);
Activation activation_from_name(const std::string& name);

}  // namespace gam
