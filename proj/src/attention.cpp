#include "gam/attention.hpp"

#include <string>

#include "gam/errors.hpp"

namespace gam {

namespace {

void check_neighbor_inputs(const NeighborInputs& nb, Mechanism mechanism) {
  const std::size_t n = nb.distances.size();
  if (nb.prices.size() != n || nb.features.size() != n) {
    throw DimensionError("neighbor inputs: parallel arrays disagree on length");
  }
  if (mechanism == Mechanism::geo && nb.coords.size() != n) {
    throw DimensionError("neighbor inputs: geo mechanism needs one coordinate per neighbor");
  }
  for (std::size_t j = 1; j < nb.features.size(); ++j) {
    if (nb.features[j].size() != nb.features[0].size()) {
      throw DimensionError("neighbor inputs: ragged feature vectors");
    }
  }
}

struct CoordScaler {
  double lat_offset = 0.0;
  double lat_scale = 1.0;
  double lon_offset = 0.0;
  double lon_scale = 1.0;
};

void build_context_rows(const NeighborInputs& nb, const Vec& scaled_distances,
                        Mechanism mechanism, const CoordScaler& coords, std::vector<Vec>& rows) {
  const std::size_t n = nb.size();
  rows.assign(n, {});
  for (std::size_t j = 0; j < n; ++j) {
    Vec& row = rows[j];
    if (mechanism == Mechanism::geo) {
      row.reserve(nb.features[j].size() + 4);
      row.push_back((nb.coords[j].lat - coords.lat_offset) * coords.lat_scale);
      row.push_back((nb.coords[j].lon - coords.lon_offset) * coords.lon_scale);
      row.insert(row.end(), nb.features[j].begin(), nb.features[j].end());
      row.push_back(scaled_distances[j]);
      row.push_back(nb.prices[j]);
    } else {
      row.reserve(nb.features[j].size() + 1);
      row.insert(row.end(), nb.features[j].begin(), nb.features[j].end());
      row.push_back(nb.prices[j]);
    }
  }
}

Vec weighted_row_sum(const std::vector<Vec>& rows, const Vec& weights) {
  if (rows.size() != weights.size()) {
    throw DimensionError("context: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(rows.size()) + " neighbors");
  }
  if (rows.empty()) throw DimensionError("context: no neighbors");
  Vec out(rows[0].size(), 0.0);
  for (std::size_t j = 0; j < rows.size(); ++j) axpy(weights[j], rows[j], out);
  return out;
}

}  // namespace

std::size_t context_dim(Mechanism mechanism, std::size_t feature_count) {
  return mechanism == Mechanism::geo ? feature_count + 4 : feature_count + 1;
}

Vec similarity_vector(const Vec& distances, const AttentionBlockParams& block) {
  Vec out(distances.size());
  const bool kernelized =
      block.mechanism == Mechanism::geo && block.similarity_kind == SimilarityKind::gaussian;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    out[i] = kernelized ? geo_similarity(distances[i], block.sigma)
                        : identity_similarity(distances[i]);
  }
  return out;
}

Vec head_attention(const Vec& similarity, const HeadParams& head) {
  HeadCache cache;
  cache.hidden = matvec(head.w_sim, similarity);
  if (head.b_sim.size() != cache.hidden.size()) {
    throw DimensionError("head_attention: bias length mismatch");
  }
  axpy(1.0, head.b_sim, cache.hidden);
  cache.attn = softmax(cache.hidden);
  cache.gate_pre = matvec(head.w_gate, cache.attn);
  axpy(1.0, head.b_gate, cache.gate_pre);
  cache.gate.resize(cache.gate_pre.size());
  for (std::size_t i = 0; i < cache.gate.size(); ++i) cache.gate[i] = sigmoid(cache.gate_pre[i]);
  cache.gated.resize(cache.attn.size());
  for (std::size_t i = 0; i < cache.gated.size(); ++i) {
    cache.gated[i] = cache.gate[i] * cache.attn[i];
  }
  return cache.gated;
}

ContextVector geo_context(const NeighborInputs& neighbors, const Vec& scaled_distances,
                          const Vec& gated_weights) {
  check_neighbor_inputs(neighbors, Mechanism::geo);
  if (scaled_distances.size() != neighbors.size()) {
    throw DimensionError("geo_context: distance vector length mismatch");
  }
  std::vector<Vec> rows;
  build_context_rows(neighbors, scaled_distances, Mechanism::geo, CoordScaler{}, rows);
  return {Mechanism::geo, weighted_row_sum(rows, gated_weights)};
}

ContextVector euc_context(const NeighborInputs& neighbors, const Vec& gated_weights) {
  check_neighbor_inputs(neighbors, Mechanism::euc);
  std::vector<Vec> rows;
  build_context_rows(neighbors, {}, Mechanism::euc, CoordScaler{}, rows);
  return {Mechanism::euc, weighted_row_sum(rows, gated_weights)};
}

ContextVector aggregate_heads(const std::vector<ContextVector>& head_vectors,
                              const AggregationGates& agg) {
  if (head_vectors.empty()) throw ConfigError("aggregate_heads: no head vectors");
  const std::size_t h = head_vectors.size();
  if (agg.weight.size() != h || agg.bias.size() != h) {
    throw DimensionError("aggregate_heads: gate count " + std::to_string(agg.weight.size()) +
                         " for " + std::to_string(h) + " heads");
  }
  for (const auto& v : head_vectors) {
    if (v.values.size() != head_vectors[0].values.size()) {
      throw DimensionError("aggregate_heads: mixed head vector lengths");
    }
  }
  Vec logits(h);
  for (std::size_t i = 0; i < h; ++i) logits[i] = agg.weight[i] + agg.bias[i];
  const Vec mix = softmax(logits);

  ContextVector out;
  out.mechanism = head_vectors[0].mechanism;
  out.values.assign(head_vectors[0].values.size(), 0.0);
  for (std::size_t i = 0; i < h; ++i) axpy(mix[i], head_vectors[i].values, out.values);
  return out;
}

BlockCache attention_block_forward(const NeighborInputs& neighbors,
                                   const AttentionBlockParams& block) {
  check_neighbor_inputs(neighbors, block.mechanism);
  if (block.heads.empty()) throw ConfigError("attention block: no heads configured");
  const std::size_t n = neighbors.size();
  if (block.neighbor_count() != n) {
    throw DimensionError("attention block sized for " + std::to_string(block.neighbor_count()) +
                         " neighbors, got " + std::to_string(n));
  }
  if (block.mechanism == Mechanism::geo && block.similarity_kind == SimilarityKind::gaussian &&
      block.sigma <= 0.0) {
    throw ConfigError("attention block: gaussian similarity needs sigma > 0");
  }
  if (block.distance_scale <= 0.0) {
    throw ConfigError("attention block: distance_scale must be positive");
  }

  BlockCache cache;
  cache.scaled_distances.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    cache.scaled_distances[j] =
        block.mechanism == Mechanism::geo ? neighbors.distances[j] / block.distance_scale
                                          : neighbors.distances[j];
  }
  cache.similarity = similarity_vector(cache.scaled_distances, block);
  const CoordScaler coords{block.lat_offset, block.lat_scale, block.lon_offset, block.lon_scale};
  build_context_rows(neighbors, cache.scaled_distances, block.mechanism, coords, cache.rows);

  cache.heads.resize(block.num_heads());
  std::vector<ContextVector> head_vectors(block.num_heads());
  for (std::size_t h = 0; h < block.num_heads(); ++h) {
    HeadCache& hc = cache.heads[h];
    const HeadParams& head = block.heads[h];
    hc.hidden = matvec(head.w_sim, cache.similarity);
    if (head.b_sim.size() != hc.hidden.size()) {
      throw DimensionError("attention block: b_sim length mismatch");
    }
    axpy(1.0, head.b_sim, hc.hidden);
    hc.attn = softmax(hc.hidden);
    hc.gate_pre = matvec(head.w_gate, hc.attn);
    axpy(1.0, head.b_gate, hc.gate_pre);
    hc.gate.resize(n);
    for (std::size_t i = 0; i < n; ++i) hc.gate[i] = sigmoid(hc.gate_pre[i]);
    hc.gated.resize(n);
    for (std::size_t i = 0; i < n; ++i) hc.gated[i] = hc.gate[i] * hc.attn[i];
    hc.context = weighted_row_sum(cache.rows, hc.gated);
    head_vectors[h] = {block.mechanism, hc.context};
  }

  Vec logits(block.num_heads());
  for (std::size_t h = 0; h < logits.size(); ++h) {
    logits[h] = block.agg.weight[h] + block.agg.bias[h];
  }
  cache.head_mix = softmax(logits);
  cache.output.assign(cache.rows[0].size(), 0.0);
  for (std::size_t h = 0; h < block.num_heads(); ++h) {
    axpy(cache.head_mix[h], cache.heads[h].context, cache.output);
  }
  return cache;
}

BlockGrads make_zero_block_grads(const AttentionBlockParams& block) {
  BlockGrads grads;
  grads.heads.resize(block.num_heads());
  const std::size_t n = block.neighbor_count();
  for (auto& hg : grads.heads) {
    hg.w_sim = Matrix(n, n);
    hg.b_sim.assign(n, 0.0);
    hg.w_gate = Matrix(n, n);
    hg.b_gate.assign(n, 0.0);
  }
  grads.agg_weight.assign(block.num_heads(), 0.0);
  grads.agg_bias.assign(block.num_heads(), 0.0);
  return grads;
}

void attention_block_backward(const Vec& d_output, const BlockCache& cache,
                              const AttentionBlockParams& block, BlockGrads& grads) {
  const std::size_t num_heads = block.num_heads();
  if (cache.heads.size() != num_heads || grads.heads.size() != num_heads) {
    throw StateError("attention backward: cache/grads head count mismatch");
  }
  if (d_output.size() != cache.output.size()) {
    throw DimensionError("attention backward: upstream gradient length mismatch");
  }
  const std::size_t n = cache.similarity.size();

  // Head-mix softmax: d logit_h = mix_h (d mix_h - sum_k mix_k d mix_k).
  Vec d_mix(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    d_mix[h] = dot(d_output, cache.heads[h].context);
  }
  double mix_dot = 0.0;
  for (std::size_t h = 0; h < num_heads; ++h) mix_dot += cache.head_mix[h] * d_mix[h];
  for (std::size_t h = 0; h < num_heads; ++h) {
    const double d_logit = cache.head_mix[h] * (d_mix[h] - mix_dot);
    grads.agg_weight[h] += d_logit;
    grads.agg_bias[h] += d_logit;
  }

  Vec d_gated(n), d_gate(n), d_gate_pre(n), d_attn(n), d_hidden(n), from_gate(n);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const HeadCache& hc = cache.heads[h];
    HeadGrads& hg = grads.heads[h];
    const double mix = cache.head_mix[h];

    // context_h = sum_j gated_j rows_j, output += mix_h context_h
    for (std::size_t j = 0; j < n; ++j) {
      d_gated[j] = mix * dot(d_output, cache.rows[j]);
    }

    // a' = gate . a
    for (std::size_t j = 0; j < n; ++j) {
      d_gate[j] = d_gated[j] * hc.attn[j];
      d_attn[j] = d_gated[j] * hc.gate[j];
    }

    // gate = sigmoid(w_gate a + b_gate)
    for (std::size_t j = 0; j < n; ++j) {
      d_gate_pre[j] = d_gate[j] * hc.gate[j] * (1.0 - hc.gate[j]);
    }
    add_outer(hg.w_gate, d_gate_pre, hc.attn);
    axpy(1.0, d_gate_pre, hg.b_gate);
    matvec_transpose_into(block.heads[h].w_gate, d_gate_pre, from_gate);
    axpy(1.0, from_gate, d_attn);

    // a = softmax(hidden)
    double attn_dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) attn_dot += hc.attn[j] * d_attn[j];
    for (std::size_t j = 0; j < n; ++j) {
      d_hidden[j] = hc.attn[j] * (d_attn[j] - attn_dot);
    }

    // hidden = w_sim L + b_sim
    add_outer(hg.w_sim, d_hidden, cache.similarity);
    axpy(1.0, d_hidden, hg.b_sim);
  }
}

}  // namespace gam
