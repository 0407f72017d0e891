#include "gam/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gam/errors.hpp"
#include "gam/rng.hpp"

namespace gam {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("row " + std::to_string(row) + ", column '" + column +
                     "': cannot parse '" + cell + "' as a real number");
  }
  return value;
}

std::int64_t parse_id(const std::string& cell, std::size_t row) {
  std::int64_t value = 0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("row " + std::to_string(row) + ", column 'id': cannot parse '" +
                     cell + "' as an integer");
  }
  return value;
}

void absorb(std::uint64_t& h, const void* data, std::size_t len) {
  h = fnv1a(data, len, h);
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

IdMap::IdMap(const Dataset& ds) {
  rows_.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rows_.emplace(ds.records[i].id, i);
}

std::size_t IdMap::row_for(std::int64_t id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) {
    throw StateError("record id " + std::to_string(id) + " not present in dataset");
  }
  return it->second;
}

bool IdMap::contains(std::int64_t id) const { return rows_.count(id) > 0; }

void validate_descriptor(const DatasetDescriptor& descriptor) {
  if (descriptor.feature_names.empty()) {
    throw ValidationError("descriptor '" + descriptor.name + "': needs at least one feature");
  }
  std::set<std::string> seen;
  for (const auto& name : descriptor.feature_names) {
    if (!seen.insert(name).second) {
      throw ValidationError("descriptor '" + descriptor.name + "': duplicate feature name '" +
                            name + "'");
    }
  }
}

DatasetDescriptor load_descriptor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open descriptor file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("descriptor " + path + ": " + e.what());
  }
  DatasetDescriptor d;
  try {
    d.name = j.at("name").get<std::string>();
    d.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    d.price_is_log_scaled = j.at("price_is_log_scaled").get<bool>();
    d.currency_label = j.value("currency_label", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("descriptor " + path + ": " + e.what());
  }
  validate_descriptor(d);
  return d;
}

void save_descriptor(const DatasetDescriptor& descriptor, const std::string& path) {
  nlohmann::json j{{"name", descriptor.name},
                   {"feature_names", descriptor.feature_names},
                   {"price_is_log_scaled", descriptor.price_is_log_scaled},
                   {"currency_label", descriptor.currency_label}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write descriptor file: " + path);
  out << j.dump(2) << "\n";
}

void validate_record(const HouseRecord& record, const DatasetDescriptor& descriptor) {
  const std::string tag = "record " + std::to_string(record.id);
  if (!(record.lat >= -90.0 && record.lat <= 90.0)) {
    throw ValidationError(tag + ": latitude " + format_real(record.lat) + " out of [-90, 90]");
  }
  if (!(record.lon >= -180.0 && record.lon <= 180.0)) {
    throw ValidationError(tag + ": longitude " + format_real(record.lon) + " out of [-180, 180]");
  }
  if (record.features.size() != descriptor.feature_count()) {
    throw ValidationError(tag + ": expected " + std::to_string(descriptor.feature_count()) +
                          " features, got " + std::to_string(record.features.size()));
  }
  for (std::size_t i = 0; i < record.features.size(); ++i) {
    if (!std::isfinite(record.features[i])) {
      throw ValidationError(tag + ": feature '" + descriptor.feature_names[i] + "' is not finite");
    }
  }
  if (!std::isfinite(record.price)) throw ValidationError(tag + ": price is not finite");
  if (!descriptor.price_is_log_scaled && record.price <= 0.0) {
    throw ValidationError(tag + ": raw-scale price must be positive, got " +
                          format_real(record.price));
  }
}

Dataset load_csv(const std::string& path, const DatasetDescriptor& descriptor) {
  validate_descriptor(descriptor);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file, header expected");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_line(line);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);

  auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw SchemaError("missing column '" + name + "' in " + path);
    return it->second;
  };
  const std::size_t id_col = require("id");
  const std::size_t lat_col = require("lat");
  const std::size_t lon_col = require("lon");
  const std::size_t price_col = require("price");
  std::vector<std::size_t> feature_cols;
  feature_cols.reserve(descriptor.feature_count());
  for (const auto& name : descriptor.feature_names) feature_cols.push_back(require(name));

  Dataset ds;
  ds.descriptor = descriptor;
  std::set<std::int64_t> seen_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    HouseRecord rec;
    rec.id = parse_id(cells[id_col], row);
    rec.lat = parse_double(cells[lat_col], row, "lat");
    rec.lon = parse_double(cells[lon_col], row, "lon");
    rec.price = parse_double(cells[price_col], row, "price");
    rec.features.reserve(feature_cols.size());
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      rec.features.push_back(parse_double(cells[feature_cols[f]], row, descriptor.feature_names[f]));
    }
    if (!seen_ids.insert(rec.id).second) {
      throw ValidationError("record " + std::to_string(rec.id) + ": duplicate id at row " +
                            std::to_string(row));
    }
    validate_record(rec, descriptor);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  out << "id,lat,lon,price";
  for (const auto& name : ds.descriptor.feature_names) out << ',' << name;
  out << '\n';
  for (const auto& rec : ds.records) {
    out << rec.id << ',' << format_real(rec.lat) << ',' << format_real(rec.lon) << ','
        << format_real(rec.price);
    for (double f : rec.features) out << ',' << format_real(f);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

NormalizationStats fit_normalization(const Dataset& train) {
  if (train.empty()) throw EmptyDatasetError("fit_normalization: empty training set");
  const std::size_t t = train.descriptor.feature_count();
  NormalizationStats stats;
  stats.min.assign(t, 0.0);
  stats.max.assign(t, 0.0);
  for (std::size_t f = 0; f < t; ++f) {
    double lo = train.records[0].features[f];
    double hi = lo;
    for (const auto& rec : train.records) {
      lo = std::min(lo, rec.features[f]);
      hi = std::max(hi, rec.features[f]);
    }
    stats.min[f] = lo;
    stats.max[f] = hi;
  }
  return stats;
}

Dataset apply_normalization(const Dataset& ds, const NormalizationStats& stats) {
  const std::size_t t = ds.descriptor.feature_count();
  if (stats.min.size() != t || stats.max.size() != t) {
    throw SchemaError("normalization stats have arity " + std::to_string(stats.min.size()) +
                      ", dataset has " + std::to_string(t) + " features");
  }
  Dataset out = ds;
  for (auto& rec : out.records) {
    for (std::size_t f = 0; f < t; ++f) {
      const double range = stats.max[f] - stats.min[f];
      rec.features[f] = range == 0.0 ? 0.0 : (rec.features[f] - stats.min[f]) / range;
    }
  }
  return out;
}

DatasetSplit split_dataset(const Dataset& ds, const SplitSpec& spec) {
  const double sum = spec.train_fraction + spec.test_fraction + spec.val_fraction;
  if (spec.train_fraction <= 0.0 || spec.test_fraction <= 0.0 || spec.val_fraction <= 0.0 ||
      std::abs(sum - 1.0) > 1e-9) {
    throw SplitError("fractions must be positive and sum to 1, got " +
                     format_real(spec.train_fraction) + "/" + format_real(spec.test_fraction) +
                     "/" + format_real(spec.val_fraction));
  }
  if (ds.size() < 10) {
    throw SplitError("dataset too small to split: " + std::to_string(ds.size()) + " records");
  }

  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  const auto n = static_cast<double>(ds.size());
  const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * n + 1e-9));
  const std::size_t n_train = ds.size() - n_test - n_val;

  DatasetSplit split;
  split.train.descriptor = ds.descriptor;
  split.test.descriptor = ds.descriptor;
  split.val.descriptor = ds.descriptor;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const HouseRecord& rec = ds.records[order[i]];
    if (i < n_train) {
      split.train.records.push_back(rec);
    } else if (i < n_train + n_test) {
      split.test.records.push_back(rec);
    } else {
      split.val.records.push_back(rec);
    }
  }
  return split;
}

namespace {

// Fixed smooth low-frequency surface over the synthetic box.
double spatial_surface(double u, double v) {
  return std::sin(2.4 * u + 0.3) * std::cos(1.9 * v - 0.6) +
         0.5 * std::sin(1.4 * (u + v));
}

constexpr double kSynthLat0 = 45.00;
constexpr double kSynthLat1 = 45.18;
constexpr double kSynthLon0 = 9.00;
constexpr double kSynthLon1 = 9.25;

}  // namespace

Dataset synthesize_dataset(std::size_t n, std::size_t num_features, double spatial_weight,
                           double noise_sd, std::uint64_t seed, SyntheticGroundTruth* truth) {
  if (n < 50) throw ConfigError("synthesize_dataset: need at least 50 records");
  if (num_features < 1) throw ConfigError("synthesize_dataset: need at least one feature");
  if (noise_sd < 0.0) throw ConfigError("synthesize_dataset: noise_sd must be non-negative");

  Dataset ds;
  ds.descriptor.name = "synthetic";
  ds.descriptor.price_is_log_scaled = false;
  ds.descriptor.currency_label = "unit";
  for (std::size_t f = 0; f < num_features; ++f) {
    ds.descriptor.feature_names.push_back("f" + std::to_string(f + 1));
  }

  Rng rng(seed);
  Vec beta(num_features);
  for (double& b : beta) b = rng.normal(0.0, 0.7);

  if (truth) {
    truth->beta = beta;
    truth->spatial.clear();
    truth->noise.clear();
  }

  ds.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    HouseRecord rec;
    rec.id = static_cast<std::int64_t>(i + 1);
    rec.lat = rng.uniform(kSynthLat0, kSynthLat1);
    rec.lon = rng.uniform(kSynthLon0, kSynthLon1);
    rec.features.resize(num_features);
    for (double& f : rec.features) f = rng.uniform01();

    const double u = (rec.lat - kSynthLat0) / (kSynthLat1 - kSynthLat0);
    const double v = (rec.lon - kSynthLon0) / (kSynthLon1 - kSynthLon0);
    const double s = spatial_surface(u, v);
    const double eps = noise_sd * rng.normal(0.0, 1.0);
    double structural = 0.0;
    for (std::size_t f = 0; f < num_features; ++f) structural += beta[f] * rec.features[f];
    rec.price = std::exp(spatial_weight * s + structural + eps);

    if (truth) {
      truth->spatial.push_back(s);
      truth->noise.push_back(eps);
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

Dataset with_log_prices(const Dataset& ds) {
  if (ds.descriptor.price_is_log_scaled) return ds;
  Dataset out = ds;
  out.descriptor.price_is_log_scaled = true;
  for (auto& rec : out.records) {
    if (rec.price <= 0.0) {
      throw DomainError("record " + std::to_string(rec.id) +
                        ": cannot log-transform non-positive price");
    }
    rec.price = std::log(rec.price);
  }
  return out;
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 14695981039346656037ULL;
  const std::uint64_t count = ds.size();
  absorb(h, &count, sizeof(count));
  for (const auto& rec : ds.records) {
    absorb(h, &rec.id, sizeof(rec.id));
    absorb(h, &rec.lat, sizeof(rec.lat));
    absorb(h, &rec.lon, sizeof(rec.lon));
    absorb(h, &rec.price, sizeof(rec.price));
    absorb(h, rec.features.data(), rec.features.size() * sizeof(double));
  }
  return h;
}

}  // namespace gam
