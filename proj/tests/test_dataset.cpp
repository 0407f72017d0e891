#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gam/dataset.hpp"
#include "gam/errors.hpp"
#include "gam/rng.hpp"

using namespace gam;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

DatasetDescriptor two_feature_descriptor() {
  DatasetDescriptor d;
  d.name = "toy";
  d.feature_names = {"area", "rooms"};
  d.price_is_log_scaled = false;
  d.currency_label = "EUR";
  return d;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("load_csv parses a small file") {
  const std::string path = temp_path("gam_toy.csv");
  write_text(path,
             "id,lat,lon,price,area,rooms\n"
             "1,45.1,9.1,100000,80,3\n"
             "2,45.2,9.2,150000,120,4\n"
             "3,45.3,9.3,90000,60,2\n");
  const Dataset ds = load_csv(path, two_feature_descriptor());
  REQUIRE(ds.size() == 3);
  CHECK(ds.records[0].id == 1);
  CHECK(ds.records[1].features.size() == 2);
  CHECK(ds.records[2].price == doctest::Approx(90000));
}

TEST_CASE("load_csv ignores extra columns and resolves by name") {
  const std::string path = temp_path("gam_extra.csv");
  write_text(path,
             "rooms,price,id,extra,lat,lon,area\n"
             "3,100000,7,ignored,45.1,9.1,80\n");
  const Dataset ds = load_csv(path, two_feature_descriptor());
  REQUIRE(ds.size() == 1);
  CHECK(ds.records[0].features[0] == doctest::Approx(80));
  CHECK(ds.records[0].features[1] == doctest::Approx(3));
}

TEST_CASE("load_csv missing price column") {
  const std::string path = temp_path("gam_noprice.csv");
  write_text(path, "id,lat,lon,area,rooms\n1,45.1,9.1,80,3\n");
  CHECK_THROWS_WITH_AS(load_csv(path, two_feature_descriptor()),
                       doctest::Contains("price"), SchemaError);
}

TEST_CASE("load_csv reports unparsable cells with row and column") {
  const std::string path = temp_path("gam_badcell.csv");
  write_text(path, "id,lat,lon,price,area,rooms\n1,45.1,9.1,oops,80,3\n");
  CHECK_THROWS_WITH_AS(load_csv(path, two_feature_descriptor()),
                       doctest::Contains("price"), ParseError);
}

TEST_CASE("load_csv rejects invariant violations with the record id") {
  const std::string path = temp_path("gam_badlat.csv");
  write_text(path, "id,lat,lon,price,area,rooms\n42,95.0,9.1,100,80,3\n");
  CHECK_THROWS_WITH_AS(load_csv(path, two_feature_descriptor()),
                       doctest::Contains("42"), ValidationError);
}

TEST_CASE("load_csv rejects duplicate ids") {
  const std::string path = temp_path("gam_dupid.csv");
  write_text(path,
             "id,lat,lon,price,area,rooms\n"
             "1,45.1,9.1,100,80,3\n"
             "1,45.2,9.2,200,90,4\n");
  CHECK_THROWS_AS(load_csv(path, two_feature_descriptor()), ValidationError);
}

TEST_CASE("csv round trip preserves canonical formatting") {
  const Dataset ds = synthesize_dataset(60, 3, 0.8, 0.1, 123);
  const std::string path_a = temp_path("gam_round_a.csv");
  const std::string path_b = temp_path("gam_round_b.csv");
  write_csv(ds, path_a);
  const Dataset reloaded = load_csv(path_a, ds.descriptor);
  REQUIRE(reloaded.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(reloaded.records[i].id == ds.records[i].id);
    CHECK(format_real(reloaded.records[i].lat) == format_real(ds.records[i].lat));
    CHECK(format_real(reloaded.records[i].lon) == format_real(ds.records[i].lon));
    CHECK(format_real(reloaded.records[i].price) == format_real(ds.records[i].price));
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(format_real(reloaded.records[i].features[f]) ==
            format_real(ds.records[i].features[f]));
    }
  }
  // a second cycle is byte-stable
  write_csv(reloaded, path_b);
  std::ifstream a(path_a), b(path_b);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(bytes_a == bytes_b);
}

TEST_CASE("fit_normalization basic cases") {
  Dataset ds;
  ds.descriptor = two_feature_descriptor();
  for (double v : {2.0, 4.0, 6.0}) {
    HouseRecord rec;
    rec.id = static_cast<std::int64_t>(v);
    rec.lat = 45.0;
    rec.lon = 9.0;
    rec.features = {v, 5.0};
    rec.price = 100.0;
    ds.records.push_back(rec);
  }
  const NormalizationStats stats = fit_normalization(ds);
  REQUIRE(stats.min.size() == 2);
  CHECK(stats.min[0] == doctest::Approx(2));
  CHECK(stats.max[0] == doctest::Approx(6));
  CHECK(stats.min[1] == doctest::Approx(5));
  CHECK(stats.max[1] == doctest::Approx(5));

  SUBCASE("empty dataset") {
    Dataset empty;
    empty.descriptor = ds.descriptor;
    CHECK_THROWS_AS(fit_normalization(empty), EmptyDatasetError);
  }

  SUBCASE("apply maps into the unit interval and handles degenerate columns") {
    const Dataset norm = apply_normalization(ds, stats);
    CHECK(norm.records[1].features[0] == doctest::Approx(0.5));
    CHECK(norm.records[0].features[1] == doctest::Approx(0.0));  // constant column
  }

  SUBCASE("values outside the training range are not clipped") {
    Dataset probe = ds;
    probe.records[0].features[0] = 8.0;
    const Dataset norm = apply_normalization(probe, stats);
    CHECK(norm.records[0].features[0] == doctest::Approx(1.5));
  }

  SUBCASE("arity mismatch") {
    NormalizationStats bad;
    bad.min = {0.0};
    bad.max = {1.0};
    CHECK_THROWS_AS(apply_normalization(ds, bad), SchemaError);
  }
}

TEST_CASE("split_dataset sizes and determinism") {
  const Dataset ds = synthesize_dataset(1000, 2, 0.0, 0.0, 9);
  const SplitSpec spec{0.7, 0.2, 0.1, 17};
  const DatasetSplit split = split_dataset(ds, spec);
  CHECK(split.train.size() == 700);
  CHECK(split.test.size() == 200);
  CHECK(split.val.size() == 100);

  const DatasetSplit again = split_dataset(ds, spec);
  CHECK(dataset_hash(again.train) == dataset_hash(split.train));
  CHECK(dataset_hash(again.test) == dataset_hash(split.test));
  CHECK(dataset_hash(again.val) == dataset_hash(split.val));

  SUBCASE("invalid fractions") {
    CHECK_THROWS_AS(split_dataset(ds, SplitSpec{0.5, 0.5, 0.5, 1}), SplitError);
  }

  SUBCASE("parts are disjoint and cover the input for random sizes and seeds") {
    Rng rng(4242);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 50 + rng.below(400);
      const Dataset sample = synthesize_dataset(n, 2, 0.3, 0.05, 100 + trial);
      const DatasetSplit parts = split_dataset(sample, SplitSpec{0.7, 0.2, 0.1, rng.next_u64()});
      std::set<std::int64_t> seen;
      for (const auto* part : {&parts.train, &parts.test, &parts.val}) {
        for (const auto& rec : part->records) CHECK(seen.insert(rec.id).second);
      }
      CHECK(seen.size() == n);
    }
  }
}

TEST_CASE("synthesize_dataset is reproducible and honors the generating process") {
  SyntheticGroundTruth truth;
  const Dataset a = synthesize_dataset(500, 4, 0.0, 0.0, 77, &truth);
  const Dataset b = synthesize_dataset(500, 4, 0.0, 0.0, 77);
  CHECK(dataset_hash(a) == dataset_hash(b));
  REQUIRE(a.size() == 500);
  REQUIRE(a.records[0].features.size() == 4);

  SUBCASE("byte-identical CSV for the same seed") {
    const std::string pa = temp_path("gam_synth_a.csv");
    const std::string pb = temp_path("gam_synth_b.csv");
    write_csv(a, pa);
    write_csv(b, pb);
    std::ifstream fa(pa), fb(pb);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ba == bb);
  }

  SUBCASE("zero noise and zero spatial weight give price = exp(beta . features)") {
    for (std::size_t i = 0; i < a.size(); ++i) {
      double acc = 0.0;
      for (std::size_t f = 0; f < 4; ++f) acc += truth.beta[f] * a.records[i].features[f];
      CHECK(a.records[i].price == doctest::Approx(std::exp(acc)).epsilon(1e-14));
    }
  }

  SUBCASE("too few records") {
    CHECK_THROWS_AS(synthesize_dataset(10, 2, 0.0, 0.0, 1), ConfigError);
  }
}

TEST_CASE("normalization fit on the training data maps it into the unit interval") {
  const Dataset ds = synthesize_dataset(200, 3, 0.5, 0.1, 5);
  const NormalizationStats stats = fit_normalization(ds);
  const Dataset norm = apply_normalization(ds, stats);
  for (const auto& rec : norm.records) {
    for (double f : rec.features) {
      CHECK(f >= -1e-12);
      CHECK(f <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("with_log_prices flips the descriptor flag") {
  const Dataset ds = synthesize_dataset(60, 2, 0.5, 0.1, 3);
  const Dataset logged = with_log_prices(ds);
  CHECK(logged.descriptor.price_is_log_scaled);
  CHECK(logged.records[0].price == doctest::Approx(std::log(ds.records[0].price)));
}

}  // TEST_SUITE
