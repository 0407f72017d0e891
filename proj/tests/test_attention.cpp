#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gam/attention.hpp"
#include "gam/errors.hpp"
#include "gam/rng.hpp"

using namespace gam;

namespace {

HeadParams zero_head(std::size_t n) {
  HeadParams head;
  head.w_sim = Matrix(n, n);
  head.b_sim.assign(n, 0.0);
  head.w_gate = Matrix(n, n);
  head.b_gate.assign(n, 0.0);
  return head;
}

HeadParams random_head(std::size_t n, Rng& rng) {
  HeadParams head = zero_head(n);
  for (auto& v : head.w_sim.data()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : head.b_sim) v = rng.uniform(-0.5, 0.5);
  for (auto& v : head.w_gate.data()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : head.b_gate) v = rng.uniform(-0.5, 0.5);
  return head;
}

AttentionBlockParams make_block(Mechanism mechanism, SimilarityKind kind, std::size_t n,
                                std::size_t heads, Rng& rng) {
  AttentionBlockParams block;
  block.mechanism = mechanism;
  block.similarity_kind = kind;
  block.sigma = 2.0;
  block.distance_scale = 1.0;
  for (std::size_t h = 0; h < heads; ++h) block.heads.push_back(random_head(n, rng));
  block.agg.weight.resize(heads);
  block.agg.bias.resize(heads);
  for (auto& v : block.agg.weight) v = rng.uniform(-0.5, 0.5);
  for (auto& v : block.agg.bias) v = rng.uniform(-0.5, 0.5);
  return block;
}

// Owns the feature rows backing the spans inside NeighborInputs.
struct NeighborFixture {
  std::vector<Vec> storage;
  NeighborInputs inputs;
};

NeighborFixture random_neighbors(Mechanism mechanism, std::size_t n, std::size_t t, Rng& rng) {
  NeighborFixture fx;
  fx.storage.resize(n);
  for (auto& row : fx.storage) {
    row.resize(t);
    for (auto& v : row) v = rng.uniform01();
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (mechanism == Mechanism::geo) {
      fx.inputs.coords.push_back({rng.uniform(44.9, 45.1), rng.uniform(8.9, 9.1)});
    }
    fx.inputs.features.push_back(fx.storage[j]);
    fx.inputs.prices.push_back(rng.uniform(0.5, 3.0));
    fx.inputs.distances.push_back(rng.uniform(0.0, 2.0));
  }
  return fx;
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("similarity vector") {
  Rng rng(1);
  AttentionBlockParams geo_gauss = make_block(Mechanism::geo, SimilarityKind::gaussian, 2, 1, rng);

  SUBCASE("zero distances map to ones under the gaussian kind") {
    const Vec l = similarity_vector({0.0, 0.0}, geo_gauss);
    CHECK(l[0] == doctest::Approx(1.0));
    CHECK(l[1] == doctest::Approx(1.0));
  }
  SUBCASE("identity passes distances through") {
    AttentionBlockParams ident = geo_gauss;
    ident.similarity_kind = SimilarityKind::identity;
    const Vec l = similarity_vector({1.0, 2.0, 3.0}, ident);
    CHECK(l == Vec{1.0, 2.0, 3.0});
  }
  SUBCASE("gaussian geo scores") {
    const Vec l = similarity_vector({0.0, 1.0}, geo_gauss);
    CHECK(l[0] == doctest::Approx(1.0));
    CHECK(l[1] == doctest::Approx(std::exp(-2.0)));
  }
  SUBCASE("structural mechanism keeps raw distances even under the gaussian kind") {
    AttentionBlockParams euc = make_block(Mechanism::euc, SimilarityKind::gaussian, 2, 1, rng);
    const Vec l = similarity_vector({0.3, 1.7}, euc);
    CHECK(l == Vec{0.3, 1.7});
  }
}

TEST_CASE("head attention") {
  SUBCASE("zero projection gives uniform attention") {
    const HeadParams head = zero_head(4);
    const Vec gated = head_attention({0.5, 1.0, 2.0, 3.0}, head);
    // softmax of constants is uniform; sigmoid(0) halves every weight
    for (double g : gated) CHECK(g == doctest::Approx(0.125));
  }

  SUBCASE("zero gate halves the attention weights") {
    Rng rng(2);
    HeadParams head = random_head(3, rng);
    head.w_gate = Matrix(3, 3);
    head.b_gate.assign(3, 0.0);
    const Vec l{0.1, 0.2, 0.3};
    const Vec gated = head_attention(l, head);
    Vec hidden = matvec(head.w_sim, l);
    axpy(1.0, head.b_sim, hidden);
    const Vec attn = softmax(hidden);
    for (std::size_t i = 0; i < 3; ++i) CHECK(gated[i] == doctest::Approx(attn[i] / 2.0));
  }

  SUBCASE("identity projection reproduces the softmax hand computation") {
    HeadParams head = zero_head(2);
    head.w_sim(0, 0) = 1.0;
    head.w_sim(1, 1) = 1.0;
    const Vec l{0.0, std::log(3.0)};
    Vec hidden = matvec(head.w_sim, l);
    axpy(1.0, head.b_sim, hidden);
    const Vec attn = softmax(hidden);
    CHECK(attn[0] == doctest::Approx(0.25));
    CHECK(attn[1] == doctest::Approx(0.75));
  }

  SUBCASE("shape mismatch") {
    const HeadParams head = zero_head(3);
    CHECK_THROWS_AS(head_attention({1.0, 2.0}, head), DimensionError);
  }
}

TEST_CASE("context vectors") {
  Rng rng(3);
  const std::size_t t = 3;

  SUBCASE("single neighbor with unit weight reproduces its concatenation") {
    NeighborFixture fx = random_neighbors(Mechanism::geo, 1, t, rng);
    const Vec scaled{0.7};
    const ContextVector ctx = geo_context(fx.inputs, scaled, {1.0});
    REQUIRE(ctx.values.size() == t + 4);
    CHECK(ctx.values[0] == doctest::Approx(fx.inputs.coords[0].lat));
    CHECK(ctx.values[1] == doctest::Approx(fx.inputs.coords[0].lon));
    CHECK(ctx.values[2] == doctest::Approx(fx.inputs.features[0][0]));
    CHECK(ctx.values[t + 2] == doctest::Approx(0.7));
    CHECK(ctx.values[t + 3] == doctest::Approx(fx.inputs.prices[0]));
  }

  SUBCASE("zero weights give the zero vector") {
    NeighborFixture fx = random_neighbors(Mechanism::euc, 3, t, rng);
    const ContextVector ctx = euc_context(fx.inputs, {0.0, 0.0, 0.0});
    REQUIRE(ctx.values.size() == t + 1);
    for (double v : ctx.values) CHECK(v == doctest::Approx(0.0));
  }

  SUBCASE("price slot is the weighted neighbor price") {
    NeighborFixture fx = random_neighbors(Mechanism::geo, 2, t, rng);
    fx.inputs.prices = {10.0, 20.0};
    const ContextVector ctx = geo_context(fx.inputs, {0.2, 0.4}, {0.5, 0.5});
    CHECK(ctx.values.back() == doctest::Approx(15.0));
  }

  SUBCASE("euclidean mechanism weighted mix") {
    NeighborFixture fx = random_neighbors(Mechanism::euc, 2, t, rng);
    fx.storage[1] = fx.storage[0];
    fx.inputs.features[1] = fx.storage[1];
    const ContextVector ctx = euc_context(fx.inputs, {0.3, 0.3});
    for (std::size_t f = 0; f < t; ++f) {
      CHECK(ctx.values[f] == doctest::Approx(0.6 * fx.storage[0][f]));
    }
    CHECK(ctx.values[t] ==
          doctest::Approx(0.3 * fx.inputs.prices[0] + 0.3 * fx.inputs.prices[1]));
  }

  SUBCASE("weight count mismatch") {
    NeighborFixture fx = random_neighbors(Mechanism::euc, 3, t, rng);
    CHECK_THROWS_AS(euc_context(fx.inputs, {1.0, 2.0}), DimensionError);
  }
}

TEST_CASE("head aggregation") {
  SUBCASE("single head passes through") {
    const ContextVector v{Mechanism::geo, {1.0, 2.0, 3.0}};
    AggregationGates agg;
    agg.weight = {0.7};
    agg.bias = {-0.2};
    const ContextVector out = aggregate_heads({v}, agg);
    CHECK(out.values == v.values);
  }

  SUBCASE("equal gates average the heads") {
    std::vector<ContextVector> heads;
    for (int h = 0; h < 4; ++h) {
      heads.push_back({Mechanism::euc, {static_cast<double>(h), 1.0}});
    }
    AggregationGates agg;
    agg.weight.assign(4, 0.3);
    agg.bias.assign(4, 0.1);
    const ContextVector out = aggregate_heads(heads, agg);
    CHECK(out.values[0] == doctest::Approx(1.5));
    CHECK(out.values[1] == doctest::Approx(1.0));
  }

  SUBCASE("softmax over gate logits") {
    std::vector<ContextVector> heads{{Mechanism::geo, {1.0}}, {Mechanism::geo, {0.0}}};
    AggregationGates agg;
    agg.weight = {std::log(3.0), 0.0};
    agg.bias = {0.0, 0.0};
    const ContextVector out = aggregate_heads(heads, agg);
    CHECK(out.values[0] == doctest::Approx(0.75));
  }

  SUBCASE("empty head list") {
    AggregationGates agg;
    CHECK_THROWS_AS(aggregate_heads({}, agg), ConfigError);
  }

  SUBCASE("mixed lengths") {
    std::vector<ContextVector> heads{{Mechanism::geo, {1.0, 2.0}}, {Mechanism::geo, {1.0}}};
    AggregationGates agg;
    agg.weight = {0.0, 0.0};
    agg.bias = {0.0, 0.0};
    CHECK_THROWS_AS(aggregate_heads(heads, agg), DimensionError);
  }
}

TEST_CASE("block forward composition") {
  Rng rng(4);
  const std::size_t t = 2;

  SUBCASE("one zero-parameter head over two neighbors halves the mean row") {
    NeighborFixture fx = random_neighbors(Mechanism::geo, 2, t, rng);
    AttentionBlockParams block = make_block(Mechanism::geo, SimilarityKind::gaussian, 2, 1, rng);
    block.heads[0] = zero_head(2);
    block.agg.weight = {0.0};
    block.agg.bias = {0.0};
    const BlockCache cache = attention_block_forward(fx.inputs, block);
    // uniform attention (1/2 each) gated by sigmoid(0): weights are 1/4 each
    for (std::size_t d = 0; d < cache.output.size(); ++d) {
      const double mean = 0.5 * (cache.rows[0][d] + cache.rows[1][d]);
      CHECK(cache.output[d] == doctest::Approx(0.5 * mean));
    }
  }

  SUBCASE("deterministic forward") {
    NeighborFixture fx = random_neighbors(Mechanism::euc, 5, t, rng);
    AttentionBlockParams block = make_block(Mechanism::euc, SimilarityKind::identity, 5, 3, rng);
    const BlockCache a = attention_block_forward(fx.inputs, block);
    const BlockCache b = attention_block_forward(fx.inputs, block);
    CHECK(a.output == b.output);
  }

  SUBCASE("head caches retained per head") {
    NeighborFixture fx = random_neighbors(Mechanism::geo, 4, t, rng);
    AttentionBlockParams block = make_block(Mechanism::geo, SimilarityKind::gaussian, 4, 8, rng);
    const BlockCache cache = attention_block_forward(fx.inputs, block);
    CHECK(cache.heads.size() == 8);
  }

  SUBCASE("geo distances are scaled before similarity and the distance slot") {
    NeighborFixture fx = random_neighbors(Mechanism::geo, 2, t, rng);
    fx.inputs.distances = {1.0, 3.0};
    AttentionBlockParams block = make_block(Mechanism::geo, SimilarityKind::gaussian, 2, 1, rng);
    block.distance_scale = 2.0;
    const BlockCache cache = attention_block_forward(fx.inputs, block);
    CHECK(cache.scaled_distances[0] == doctest::Approx(0.5));
    CHECK(cache.scaled_distances[1] == doctest::Approx(1.5));
    CHECK(cache.similarity[0] == doctest::Approx(geo_similarity(0.5, block.sigma)));
    CHECK(cache.rows[0][t + 2] == doctest::Approx(0.5));
  }
}

TEST_CASE("attention invariants over randomized blocks") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    const std::size_t t = 1 + rng.below(5);
    const std::size_t heads = 1 + rng.below(4);
    const Mechanism mechanism = rng.below(2) == 0 ? Mechanism::geo : Mechanism::euc;
    const SimilarityKind kind =
        rng.below(2) == 0 ? SimilarityKind::identity : SimilarityKind::gaussian;

    NeighborFixture fx = random_neighbors(mechanism, n, t, rng);
    AttentionBlockParams block = make_block(mechanism, kind, n, heads, rng);
    const BlockCache cache = attention_block_forward(fx.inputs, block);

    CHECK(cache.output.size() == context_dim(mechanism, t));
    double mix_sum = 0.0;
    for (double m : cache.head_mix) {
      CHECK(m >= 0.0);
      mix_sum += m;
    }
    CHECK(mix_sum == doctest::Approx(1.0).epsilon(1e-9));

    for (const auto& hc : cache.heads) {
      const double attn_sum = std::accumulate(hc.attn.begin(), hc.attn.end(), 0.0);
      CHECK(attn_sum == doctest::Approx(1.0).epsilon(1e-9));
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(hc.gate[i] > 0.0);
        CHECK(hc.gate[i] < 1.0);
        CHECK(hc.gated[i] > 0.0);
        CHECK(hc.gated[i] < hc.attn[i]);
        CHECK(std::isfinite(hc.gated[i]));
      }
    }
    for (double v : cache.output) CHECK(std::isfinite(v));
  }
}

TEST_CASE("neighbor permutation equivariance") {
  Rng rng(123);
  const std::size_t n = 5;
  const std::size_t t = 3;
  NeighborFixture fx = random_neighbors(Mechanism::geo, n, t, rng);
  AttentionBlockParams block = make_block(Mechanism::geo, SimilarityKind::gaussian, n, 2, rng);
  const BlockCache base = attention_block_forward(fx.inputs, block);

  // rotate neighbors by one and permute parameter rows/columns to match
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = (i + 1) % n;

  NeighborFixture permuted;
  permuted.storage = fx.storage;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = perm[i];
    permuted.inputs.coords.push_back(fx.inputs.coords[src]);
    permuted.inputs.features.push_back(permuted.storage[src]);
    permuted.inputs.prices.push_back(fx.inputs.prices[src]);
    permuted.inputs.distances.push_back(fx.inputs.distances[src]);
  }

  AttentionBlockParams permuted_block = block;
  for (std::size_t h = 0; h < block.heads.size(); ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      permuted_block.heads[h].b_sim[i] = block.heads[h].b_sim[perm[i]];
      permuted_block.heads[h].b_gate[i] = block.heads[h].b_gate[perm[i]];
      for (std::size_t j = 0; j < n; ++j) {
        permuted_block.heads[h].w_sim(i, j) = block.heads[h].w_sim(perm[i], perm[j]);
        permuted_block.heads[h].w_gate(i, j) = block.heads[h].w_gate(perm[i], perm[j]);
      }
    }
  }

  const BlockCache rotated = attention_block_forward(permuted.inputs, permuted_block);
  REQUIRE(rotated.output.size() == base.output.size());
  for (std::size_t d = 0; d < base.output.size(); ++d) {
    CHECK(rotated.output[d] == doctest::Approx(base.output[d]).epsilon(1e-12));
  }
}

}  // TEST_SUITE
