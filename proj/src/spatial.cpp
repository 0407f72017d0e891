#include "gam/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "gam/binio.hpp"
#include "gam/errors.hpp"
#include "gam/parallel.hpp"

namespace gam {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void validate_point(const GeoPoint& p) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0)) {
    throw ValidationError("latitude out of range: " + format_real(p.lat));
  }
  if (!(p.lon >= -180.0 && p.lon <= 180.0)) {
    throw ValidationError("longitude out of range: " + format_real(p.lon));
  }
}

}  // namespace

double geodesic_distance(const GeoPoint& a, const GeoPoint& b) {
  validate_point(a);
  validate_point(b);
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = deg2rad(b.lat - a.lat);
  const double dlambda = deg2rad(b.lon - a.lon);
  const double sin_dphi = std::sin(dphi / 2.0);
  const double sin_dlambda = std::sin(dlambda / 2.0);
  const double h = sin_dphi * sin_dphi + std::cos(phi1) * std::cos(phi2) * sin_dlambda * sin_dlambda;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("euclidean_distance: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double gaussian_kernel(double d, double sigma) {
  if (sigma <= 0.0) throw ConfigError("gaussian_kernel: sigma must be positive");
  if (d < 0.0) throw ValidationError("gaussian_kernel: negative distance");
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double geo_similarity(double geo_dist, double sigma) {
  if (sigma <= 0.0) throw ConfigError("geo_similarity: sigma must be positive");
  if (geo_dist < 0.0) throw ValidationError("geo_similarity: negative distance");
  const double rho = sigma * sigma / 2.0;
  return std::exp(-geo_dist * rho);
}

double identity_similarity(double d) {
  if (d < 0.0) throw ValidationError("identity_similarity: negative distance");
  return d;
}

const IndexEntry& NeighborIndex::entry_for(std::int64_t id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) {
    throw StateError("neighbor index has no entry for record id " + std::to_string(id));
  }
  return entries[it->second];
}

double NeighborIndex::max_geo_distance() const {
  double mx = 0.0;
  for (const auto& e : entries) {
    if (!e.geo.empty()) mx = std::max(mx, e.geo.back().distance);
  }
  return mx;
}

NeighborIndex build_neighbor_index(const Dataset& queries, const Dataset& pool,
                                   std::size_t num_geo, std::size_t num_euc, unsigned threads) {
  if (num_geo == 0 && num_euc == 0) {
    throw ConfigError("build_neighbor_index: at least one neighbor count must be positive");
  }
  const std::size_t needed = std::max(num_geo, num_euc);
  if (pool.size() <= needed) {
    throw ConfigError("build_neighbor_index: pool of " + std::to_string(pool.size()) +
                      " records cannot supply " + std::to_string(needed) + " neighbors");
  }
  if (queries.descriptor.feature_count() != pool.descriptor.feature_count()) {
    throw ConfigError("build_neighbor_index: queries and pool disagree on feature count");
  }

  NeighborIndex index;
  index.queries_hash = dataset_hash(queries);
  index.pool_hash = dataset_hash(pool);
  index.num_geo = num_geo;
  index.num_euc = num_euc;
  index.entries.resize(queries.size());

  const auto select_nearest = [](std::vector<NeighborEntry>& scratch, std::size_t k) {
    const auto by_distance_then_id = [](const NeighborEntry& a, const NeighborEntry& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    };
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                      scratch.end(), by_distance_then_id);
    scratch.resize(k);
  };

  parallel_for_chunks(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<NeighborEntry> geo_scratch;
    std::vector<NeighborEntry> euc_scratch;
    for (std::size_t q = begin; q < end; ++q) {
      const HouseRecord& query = queries.records[q];
      geo_scratch.clear();
      euc_scratch.clear();
      for (const auto& cand : pool.records) {
        if (cand.id == query.id) continue;
        if (num_geo > 0) {
          const double d = geodesic_distance({query.lat, query.lon}, {cand.lat, cand.lon});
          geo_scratch.push_back({cand.id, d});
        }
        if (num_euc > 0) {
          const double d = euclidean_distance(query.features, cand.features);
          euc_scratch.push_back({cand.id, d});
        }
      }
      IndexEntry entry;
      entry.query_id = query.id;
      if (num_geo > 0) {
        select_nearest(geo_scratch, num_geo);
        entry.geo = std::move(geo_scratch);
        geo_scratch = {};
      }
      if (num_euc > 0) {
        select_nearest(euc_scratch, num_euc);
        entry.euc = std::move(euc_scratch);
        euc_scratch = {};
      }
      index.entries[q] = std::move(entry);
    }
  });

  index.by_id.reserve(index.entries.size());
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    index.by_id.emplace(index.entries[i].query_id, i);
  }
  return index;
}

double idw_weighted(const Vec& distances, const Vec& prices, double power) {
  if (distances.empty()) throw ConfigError("idw: empty neighbor list");
  if (distances.size() != prices.size()) throw DimensionError("idw: length mismatch");
  if (power <= 0.0) throw ConfigError("idw: power must be positive");
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] == 0.0) return prices[i];  // exact hit
  }
  double wsum = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double w = 1.0 / std::pow(distances[i], power);
    wsum += w;
    acc += w * prices[i];
  }
  return acc / wsum;
}

double idw_interpolate(const GeoPoint& target,
                       const std::vector<std::pair<GeoPoint, double>>& neighbors, double power) {
  if (neighbors.empty()) throw ConfigError("idw: empty neighbor list");
  Vec distances;
  Vec prices;
  distances.reserve(neighbors.size());
  prices.reserve(neighbors.size());
  for (const auto& [point, price] : neighbors) {
    distances.push_back(geodesic_distance(target, point));
    prices.push_back(price);
  }
  return idw_weighted(distances, prices, power);
}

namespace {

constexpr char kIndexMagic[4] = {'G', 'A', 'M', 'N'};
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

void save_neighbor_index(const NeighborIndex& index, const std::string& path) {
  nlohmann::json header{{"format_version", kIndexVersion},
                        {"queries_hash", index.queries_hash},
                        {"pool_hash", index.pool_hash},
                        {"num_geo", index.num_geo},
                        {"num_euc", index.num_euc},
                        {"count", index.entries.size()}};
  const std::string header_str = header.dump();

  std::string bytes;
  append_bytes(bytes, kIndexMagic, sizeof(kIndexMagic));
  append_scalar<std::uint32_t>(bytes, static_cast<std::uint32_t>(header_str.size()));
  bytes += header_str;
  for (const auto& entry : index.entries) {
    append_scalar<std::int64_t>(bytes, entry.query_id);
    for (const auto& nb : entry.geo) append_scalar<std::int64_t>(bytes, nb.id);
    for (const auto& nb : entry.geo) append_scalar<double>(bytes, nb.distance);
    for (const auto& nb : entry.euc) append_scalar<std::int64_t>(bytes, nb.id);
    for (const auto& nb : entry.euc) append_scalar<double>(bytes, nb.distance);
  }
  write_file_atomic(path, bytes);
}

NeighborIndex load_neighbor_index(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader reader(bytes, "neighbor index " + path);

  const std::string magic = reader.read_bytes(4);
  if (std::string(kIndexMagic, 4) != magic) {
    throw FormatError(path + ": not a neighbor index file");
  }
  const auto header_len = reader.read_scalar<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(reader.read_bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }
  const auto version = header.at("format_version").get<std::uint32_t>();
  if (version != kIndexVersion) {
    throw VersionError(path + ": file version " + std::to_string(version) +
                       ", reader supports version " + std::to_string(kIndexVersion));
  }

  NeighborIndex index;
  index.queries_hash = header.at("queries_hash").get<std::uint64_t>();
  index.pool_hash = header.at("pool_hash").get<std::uint64_t>();
  index.num_geo = header.at("num_geo").get<std::size_t>();
  index.num_euc = header.at("num_euc").get<std::size_t>();
  const auto count = header.at("count").get<std::size_t>();
  index.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    IndexEntry entry;
    entry.query_id = reader.read_scalar<std::int64_t>();
    entry.geo.resize(index.num_geo);
    for (auto& nb : entry.geo) nb.id = reader.read_scalar<std::int64_t>();
    for (auto& nb : entry.geo) nb.distance = reader.read_scalar<double>();
    entry.euc.resize(index.num_euc);
    for (auto& nb : entry.euc) nb.id = reader.read_scalar<std::int64_t>();
    for (auto& nb : entry.euc) nb.distance = reader.read_scalar<double>();
    index.entries.push_back(std::move(entry));
  }
  if (!reader.at_end()) throw FormatError(path + ": trailing bytes after payload");

  index.by_id.reserve(index.entries.size());
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    index.by_id.emplace(index.entries[i].query_id, i);
  }
  return index;
}

NeighborIndex load_or_build_index(const Dataset& queries, const Dataset& pool,
                                  std::size_t num_geo, std::size_t num_euc,
                                  const std::string& cache_path, unsigned threads) {
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    try {
      NeighborIndex cached = load_neighbor_index(cache_path);
      if (cached.queries_hash == dataset_hash(queries) && cached.pool_hash == dataset_hash(pool) &&
          cached.num_geo == num_geo && cached.num_euc == num_euc) {
        return cached;
      }
    } catch (const Error&) {
      // unreadable or mismatched cache: rebuild below
    }
  }
  NeighborIndex index = build_neighbor_index(queries, pool, num_geo, num_euc, threads);
  if (!cache_path.empty()) save_neighbor_index(index, cache_path);
  return index;
}

}  // namespace gam
