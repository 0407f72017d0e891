#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <filesystem>

#include "gam/binio.hpp"
#include "gam/dataset.hpp"
#include "gam/errors.hpp"
#include "gam/rng.hpp"
#include "gam/spatial.hpp"

using namespace gam;

namespace {

// Brute-force reference: full pairwise scan, sort by (distance, id), truncate.
std::vector<NeighborEntry> oracle_nearest(const Dataset& pool, const HouseRecord& query,
                                          std::size_t k, bool geodesic) {
  std::vector<NeighborEntry> all;
  for (const auto& cand : pool.records) {
    if (cand.id == query.id) continue;
    const double d = geodesic
                         ? geodesic_distance({query.lat, query.lon}, {cand.lat, cand.lon})
                         : euclidean_distance(query.features, cand.features);
    all.push_back({cand.id, d});
  }
  std::sort(all.begin(), all.end(), [](const NeighborEntry& a, const NeighborEntry& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  });
  all.resize(k);
  return all;
}

}  // namespace

TEST_SUITE("spatial") {

TEST_CASE("geodesic distance reference values") {
  CHECK(geodesic_distance({12.5, -33.0}, {12.5, -33.0}) == doctest::Approx(0.0));
  // one degree of longitude on the equator: R * pi / 180
  CHECK(geodesic_distance({0.0, 0.0}, {0.0, 1.0}) == doctest::Approx(111.195).epsilon(1e-5));
  // antipodal points: half the great circle, R * pi
  const double half_circle = 6371.0088 * std::numbers::pi;
  CHECK(geodesic_distance({0.0, 0.0}, {0.0, 180.0}) ==
        doctest::Approx(half_circle).epsilon(1e-12));
  CHECK(half_circle == doctest::Approx(20015.11).epsilon(1e-6));

  SUBCASE("symmetry on random inputs") {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
      const GeoPoint a{rng.uniform(-90, 90), rng.uniform(-180, 180)};
      const GeoPoint b{rng.uniform(-90, 90), rng.uniform(-180, 180)};
      const double ab = geodesic_distance(a, b);
      const double ba = geodesic_distance(b, a);
      CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
      CHECK(ab >= 0.0);
    }
  }

  SUBCASE("invalid coordinates") {
    CHECK_THROWS_AS(geodesic_distance({91.0, 0.0}, {0.0, 0.0}), ValidationError);
  }
}

TEST_CASE("euclidean distance") {
  const Vec a{0.0, 0.0};
  const Vec b{3.0, 4.0};
  CHECK(euclidean_distance(a, b) == doctest::Approx(5.0));
  CHECK(euclidean_distance(a, a) == doctest::Approx(0.0));
  const Vec c{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(euclidean_distance(a, c), DimensionError);
}

TEST_CASE("gaussian kernel") {
  CHECK(gaussian_kernel(0.0, 2.0) == doctest::Approx(1.0));
  CHECK(gaussian_kernel(2.0, 2.0) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK_THROWS_AS(gaussian_kernel(1.0, 0.0), ConfigError);

  SUBCASE("output in (0,1], strictly decreasing") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      const double sigma = rng.uniform(0.1, 10.0);
      const double d1 = rng.uniform(0.0, 5.0);
      const double d2 = d1 + rng.uniform(0.01, 5.0);
      const double k1 = gaussian_kernel(d1, sigma);
      const double k2 = gaussian_kernel(d2, sigma);
      CHECK(k1 > 0.0);
      CHECK(k1 <= 1.0);
      CHECK(k1 > k2);
    }
  }
}

TEST_CASE("geo similarity uses the linear-distance form") {
  CHECK(geo_similarity(0.0, 2.0) == doctest::Approx(1.0));
  CHECK(geo_similarity(1.0, 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(geo_similarity(1.0, -1.0), ConfigError);

  SUBCASE("monotone decreasing") {
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
      const double sigma = rng.uniform(0.1, 5.0);
      const double d1 = rng.uniform(0.0, 3.0);
      const double d2 = d1 + rng.uniform(0.01, 3.0);
      CHECK(geo_similarity(d1, sigma) > geo_similarity(d2, sigma));
    }
  }
}

TEST_CASE("identity similarity passes distances through") {
  CHECK(identity_similarity(0.0) == doctest::Approx(0.0));
  CHECK(identity_similarity(3.7) == doctest::Approx(3.7));
  CHECK_THROWS_AS(identity_similarity(-0.5), ValidationError);
}

TEST_CASE("neighbor index matches the exhaustive oracle") {
  const Dataset pool = synthesize_dataset(120, 3, 0.5, 0.1, 21);
  const NeighborIndex index = build_neighbor_index(pool, pool, 5, 7, 2);
  REQUIRE(index.entries.size() == pool.size());
  for (std::size_t q = 0; q < pool.size(); ++q) {
    const auto geo_oracle = oracle_nearest(pool, pool.records[q], 5, true);
    const auto euc_oracle = oracle_nearest(pool, pool.records[q], 7, false);
    const IndexEntry& entry = index.entries[q];
    REQUIRE(entry.geo.size() == 5);
    REQUIRE(entry.euc.size() == 7);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(entry.geo[i].id == geo_oracle[i].id);
      CHECK(entry.geo[i].distance == geo_oracle[i].distance);
    }
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(entry.euc[i].id == euc_oracle[i].id);
      CHECK(entry.euc[i].distance == euc_oracle[i].distance);
    }
  }
}

TEST_CASE("neighbor index basics") {
  const Dataset pool = synthesize_dataset(60, 2, 0.5, 0.1, 22);

  SUBCASE("a query in the pool is never its own neighbor") {
    const NeighborIndex index = build_neighbor_index(pool, pool, 10, 10, 1);
    for (const auto& entry : index.entries) {
      for (const auto& nb : entry.geo) CHECK(nb.id != entry.query_id);
      for (const auto& nb : entry.euc) CHECK(nb.id != entry.query_id);
    }
  }

  SUBCASE("distances are non-decreasing") {
    const NeighborIndex index = build_neighbor_index(pool, pool, 12, 12, 0);
    for (const auto& entry : index.entries) {
      for (std::size_t i = 1; i < entry.geo.size(); ++i) {
        CHECK(entry.geo[i - 1].distance <= entry.geo[i].distance);
      }
    }
  }

  SUBCASE("pool too small") {
    CHECK_THROWS_AS(build_neighbor_index(pool, pool, pool.size(), 5, 1), ConfigError);
  }

  SUBCASE("parallel build equals sequential build") {
    const NeighborIndex seq = build_neighbor_index(pool, pool, 8, 8, 1);
    const NeighborIndex par = build_neighbor_index(pool, pool, 8, 8, 4);
    REQUIRE(seq.entries.size() == par.entries.size());
    for (std::size_t i = 0; i < seq.entries.size(); ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(seq.entries[i].geo[j].id == par.entries[i].geo[j].id);
        CHECK(seq.entries[i].geo[j].distance == par.entries[i].geo[j].distance);
        CHECK(seq.entries[i].euc[j].id == par.entries[i].euc[j].id);
        CHECK(seq.entries[i].euc[j].distance == par.entries[i].euc[j].distance);
      }
    }
  }
}

TEST_CASE("idw interpolation") {
  SUBCASE("single neighbor returns its price") {
    CHECK(idw_weighted({2.5}, {420.0}, 2.0) == doctest::Approx(420.0));
  }
  SUBCASE("two equidistant neighbors average") {
    CHECK(idw_weighted({1.5, 1.5}, {100.0, 300.0}, 2.0) == doctest::Approx(200.0));
  }
  SUBCASE("hand-computed weighting") {
    CHECK(idw_weighted({1.0, 2.0}, {100.0, 400.0}, 2.0) == doctest::Approx(160.0));
  }
  SUBCASE("exact hit returns that neighbor's price") {
    CHECK(idw_weighted({0.7, 0.0}, {100.0, 999.0}, 2.0) == doctest::Approx(999.0));
  }
  SUBCASE("empty neighbors") {
    CHECK_THROWS_AS(idw_weighted({}, {}, 2.0), ConfigError);
  }
  SUBCASE("geo point interface computes geodesic distances") {
    const GeoPoint target{0.0, 0.0};
    const std::vector<std::pair<GeoPoint, double>> neighbors{
        {{0.0, 0.1}, 100.0}, {{0.0, -0.1}, 300.0}};
    CHECK(idw_interpolate(target, neighbors, 2.0) == doctest::Approx(200.0).epsilon(1e-9));
  }
  SUBCASE("output bounded by neighbor prices") {
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
      const std::size_t n = 1 + rng.below(8);
      Vec dists(n), prices(n);
      for (std::size_t j = 0; j < n; ++j) {
        dists[j] = rng.uniform(0.01, 5.0);
        prices[j] = rng.uniform(50.0, 500.0);
      }
      const double p = idw_weighted(dists, prices, rng.uniform(0.5, 3.0));
      CHECK(p >= *std::min_element(prices.begin(), prices.end()) - 1e-9);
      CHECK(p <= *std::max_element(prices.begin(), prices.end()) + 1e-9);
    }
  }
}

TEST_CASE("neighbor index cache round trip and validation") {
  const Dataset pool = synthesize_dataset(80, 2, 0.4, 0.1, 30);
  const auto cache =
      (std::filesystem::temp_directory_path() / "gam_index_cache.nidx").string();
  std::filesystem::remove(cache);

  const NeighborIndex built = load_or_build_index(pool, pool, 6, 6, cache, 2);
  REQUIRE(std::filesystem::exists(cache));
  const NeighborIndex loaded = load_neighbor_index(cache);
  CHECK(loaded.pool_hash == built.pool_hash);
  CHECK(loaded.num_geo == 6);
  REQUIRE(loaded.entries.size() == built.entries.size());
  for (std::size_t i = 0; i < built.entries.size(); ++i) {
    CHECK(loaded.entries[i].query_id == built.entries[i].query_id);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(loaded.entries[i].geo[j].id == built.entries[i].geo[j].id);
      CHECK(loaded.entries[i].geo[j].distance == built.entries[i].geo[j].distance);
    }
  }

  SUBCASE("mismatched settings trigger a rebuild") {
    const NeighborIndex rebuilt = load_or_build_index(pool, pool, 9, 6, cache, 2);
    CHECK(rebuilt.num_geo == 9);
    CHECK(load_neighbor_index(cache).num_geo == 9);
  }

  SUBCASE("truncated cache is rejected") {
    std::string bytes = read_file_bytes(cache);
    bytes.resize(bytes.size() / 2);
    write_file_atomic(cache, bytes);
    CHECK_THROWS_AS(load_neighbor_index(cache), FormatError);
  }
}

}  // TEST_SUITE
