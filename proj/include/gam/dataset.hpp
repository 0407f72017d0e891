#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gam/linalg.hpp"

namespace gam {

struct HouseRecord {
  std::int64_t id = 0;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<double> features;
  double price = 0.0;
};

// JSON sidecar describing a CSV dataset.
struct DatasetDescriptor {
  std::string name;
  std::vector<std::string> feature_names;
  bool price_is_log_scaled = false;
  std::string currency_label;

  std::size_t feature_count() const { return feature_names.size(); }
};

struct Dataset {
  DatasetDescriptor descriptor;
  std::vector<HouseRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// Per-feature min/max, fit on the training split only.
struct NormalizationStats {
  Vec min;
  Vec max;
};

struct SplitSpec {
  double train_fraction = 0.7;
  double test_fraction = 0.2;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
  Dataset val;
};

// Generating process of a synthetic dataset, for test oracles.
struct SyntheticGroundTruth {
  Vec beta;
  Vec spatial;  // s(lat, lon) per record
  Vec noise;
};

// Maps record ids to row offsets.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(const Dataset& ds);
  std::size_t row_for(std::int64_t id) const;  // StateError if absent
  bool contains(std::int64_t id) const;

 private:
  std::unordered_map<std::int64_t, std::size_t> rows_;
};

void validate_descriptor(const DatasetDescriptor& descriptor);
DatasetDescriptor load_descriptor(const std::string& path);
void save_descriptor(const DatasetDescriptor& descriptor, const std::string& path);

void validate_record(const HouseRecord& record, const DatasetDescriptor& descriptor);

// CSV schema: id,lat,lon,price,<feature_1>,...,<feature_T>. Columns are
// resolved by header name; extra columns are ignored.
Dataset load_csv(const std::string& path, const DatasetDescriptor& descriptor);
void write_csv(const Dataset& ds, const std::string& path);

NormalizationStats fit_normalization(const Dataset& train);
Dataset apply_normalization(const Dataset& ds, const NormalizationStats& stats);

DatasetSplit split_dataset(const Dataset& ds, const SplitSpec& spec);

// Coordinates uniform in a small geographic box; price =
// exp(spatial_weight * s(lat, lon) + beta . features + noise) with s a fixed
// smooth low-frequency surface and beta drawn once from the seed.
Dataset synthesize_dataset(std::size_t n, std::size_t num_features, double spatial_weight,
                           double noise_sd, std::uint64_t seed,
                           SyntheticGroundTruth* truth = nullptr);

// Replaces prices with their natural logs and flags the descriptor
// accordingly. DomainError on non-positive prices.
Dataset with_log_prices(const Dataset& ds);

std::uint64_t dataset_hash(const Dataset& ds);

// Canonical decimal formatting: 12 significant digits.
std::string format_real(double v);

// FNV-1a, shared by the dataset hash and file digests.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace gam
