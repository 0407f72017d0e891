#pragma once

#include <span>
#include <vector>

#include "gam/linalg.hpp"
#include "gam/spatial.hpp"

namespace gam {

enum class Mechanism { geo, euc };
enum class SimilarityKind { identity, gaussian };

// One attention head: a similarity projection (n -> n) and a gate over the
// softmaxed attention weights (n -> n).
struct HeadParams {
  Matrix w_sim;
  Vec b_sim;
  Matrix w_gate;
  Vec b_gate;
};

// One (weight, bias) scalar pair per head; softmaxed into head mixing weights.
struct AggregationGates {
  Vec weight;
  Vec bias;
};

struct AttentionBlockParams {
  Mechanism mechanism = Mechanism::geo;
  SimilarityKind similarity_kind = SimilarityKind::gaussian;
  double sigma = 2.0;
  // Raw geodesic distances divide by this before entering the similarity
  // stage and the context's distance slot. Fit to the maximum training-set
  // geo-neighbor distance; 1 for the structural mechanism.
  double distance_scale = 1.0;
  // Affine map (value - offset) * scale applied to coordinates where they
  // enter context rows as values (never to the haversine inputs). Fit to the
  // training split's coordinate ranges; identity by default. Geo only.
  double lat_offset = 0.0;
  double lat_scale = 1.0;
  double lon_offset = 0.0;
  double lon_scale = 1.0;
  std::vector<HeadParams> heads;
  AggregationGates agg;

  std::size_t num_heads() const { return heads.size(); }
  std::size_t neighbor_count() const { return heads.empty() ? 0 : heads[0].b_sim.size(); }
};

struct ContextVector {
  Mechanism mechanism = Mechanism::geo;
  Vec values;
};

// Per-target neighbor view; parallel arrays of length n. coords is used by
// the geo mechanism only. distances are raw (kilometers or feature space).
struct NeighborInputs {
  std::vector<GeoPoint> coords;
  std::vector<std::span<const double>> features;
  Vec prices;
  Vec distances;

  std::size_t size() const { return distances.size(); }
};

struct HeadCache {
  Vec hidden;    // H = w_sim L + b_sim
  Vec attn;      // a = softmax(H)
  Vec gate_pre;  // w_gate a + b_gate
  Vec gate;      // sigmoid(gate_pre)
  Vec gated;     // a' = gate . a
  Vec context;   // sum_j a'_j c_j
};

struct BlockCache {
  Vec scaled_distances;
  Vec similarity;          // L
  std::vector<Vec> rows;   // per-neighbor context rows c_j
  std::vector<HeadCache> heads;
  Vec head_mix;            // softmax over per-head gate scalars
  Vec output;
};

// Context row layout: geo = [lat, lon, features..., scaled distance, price]
// (length T+4); euc = [features..., price] (length T+1).
std::size_t context_dim(Mechanism mechanism, std::size_t feature_count);

// Geo mechanism with the gaussian kind maps each distance through
// geo_similarity; every other combination passes distances through unchanged
// (the structural mechanism's similarity scores are its distances).
Vec similarity_vector(const Vec& distances, const AttentionBlockParams& block);

// H = w_sim L + b_sim; a = softmax(H); g = sigmoid(w_gate a + b_gate);
// returns a' = g . a.
Vec head_attention(const Vec& similarity, const HeadParams& head);

ContextVector geo_context(const NeighborInputs& neighbors, const Vec& scaled_distances,
                          const Vec& gated_weights);
ContextVector euc_context(const NeighborInputs& neighbors, const Vec& gated_weights);

// Softmax over per-head (weight + bias) scalars, then the mix-weighted sum of
// head vectors.
ContextVector aggregate_heads(const std::vector<ContextVector>& head_vectors,
                              const AggregationGates& agg);

BlockCache attention_block_forward(const NeighborInputs& neighbors,
                                   const AttentionBlockParams& block);

struct HeadGrads {
  Matrix w_sim;
  Vec b_sim;
  Matrix w_gate;
  Vec b_gate;
};

struct BlockGrads {
  std::vector<HeadGrads> heads;
  Vec agg_weight;
  Vec agg_bias;
};

BlockGrads make_zero_block_grads(const AttentionBlockParams& block);

// Accumulates parameter gradients for d(loss)/d(output) into grads.
void attention_block_backward(const Vec& d_output, const BlockCache& cache,
                              const AttentionBlockParams& block, BlockGrads& grads);

}  // namespace gam
