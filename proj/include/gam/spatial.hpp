#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gam/dataset.hpp"
#include "gam/linalg.hpp"

namespace gam {

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

// Great-circle distance in kilometers (haversine on a sphere of radius
// 6371.0088 km). Symmetric, non-negative, zero iff the points coincide.
double geodesic_distance(const GeoPoint& a, const GeoPoint& b);

double euclidean_distance(std::span<const double> a, std::span<const double> b);

// exp(-d^2 / (2 sigma^2)); 1 at d = 0, strictly decreasing in d.
double gaussian_kernel(double d, double sigma);

// Geographic similarity score exp(-d * rho) with rho = sigma^2 / 2. The
// distance enters linearly, so this is not the standard Gaussian form.
double geo_similarity(double geo_dist, double sigma);

// Identity similarity option: the distance feeds the attention's similarity
// layer untransformed. Rejects negative inputs.
double identity_similarity(double d);

enum class NeighborKind { geodesic, structural };

struct NeighborEntry {
  std::int64_t id = 0;
  double distance = 0.0;
};

struct NeighborList {
  std::int64_t target_id = 0;
  NeighborKind kind = NeighborKind::geodesic;
  std::vector<NeighborEntry> entries;  // ascending (distance, id)
};

struct IndexEntry {
  std::int64_t query_id = 0;
  std::vector<NeighborEntry> geo;
  std::vector<NeighborEntry> euc;
};

struct NeighborIndex {
  std::uint64_t queries_hash = 0;
  std::uint64_t pool_hash = 0;
  std::size_t num_geo = 0;
  std::size_t num_euc = 0;
  std::vector<IndexEntry> entries;  // query order
  std::unordered_map<std::int64_t, std::size_t> by_id;

  const IndexEntry& entry_for(std::int64_t id) const;
  double max_geo_distance() const;
};

// Exact brute-force n-nearest search for both mechanisms. The query record is
// never its own neighbor (matched by id); ties break by ascending neighbor id.
// Structural distances are Euclidean over the datasets' feature vectors as
// given, so callers wanting scaled distances normalize first.
NeighborIndex build_neighbor_index(const Dataset& queries, const Dataset& pool,
                                   std::size_t num_geo, std::size_t num_euc,
                                   unsigned threads = 0);

// Inverse-distance-weighted mean of prices; any zero distance returns that
// neighbor's price exactly.
double idw_weighted(const Vec& distances, const Vec& prices, double power);
double idw_interpolate(const GeoPoint& target,
                       const std::vector<std::pair<GeoPoint, double>>& neighbors, double power);

void save_neighbor_index(const NeighborIndex& index, const std::string& path);
NeighborIndex load_neighbor_index(const std::string& path);

// Loads a cached index when its header matches (hashes and neighbor counts);
// otherwise rebuilds and rewrites the cache. Empty cache_path disables
// caching.
NeighborIndex load_or_build_index(const Dataset& queries, const Dataset& pool,
                                  std::size_t num_geo, std::size_t num_euc,
                                  const std::string& cache_path, unsigned threads = 0);

}  // namespace gam
