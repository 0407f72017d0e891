#include "gam/model.hpp"

#include <cmath>
#include <string>

#include "gam/errors.hpp"
#include "gam/parallel.hpp"

namespace gam {

double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::linear:
      return x;
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::elu:
      return x > 0.0 ? x : std::expm1(x);
  }
  return x;
}

double activation_derivative(Activation act, double pre) {
  switch (act) {
    case Activation::linear:
      return 1.0;
    case Activation::relu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::elu:
      return pre > 0.0 ? 1.0 : std::exp(pre);
  }
  return 1.0;
}

Gradients make_zero_gradients(const ModelParams& params) {
  Gradients g;
  g.geo = make_zero_block_grads(params.geo_block);
  g.euc = make_zero_block_grads(params.euc_block);
  g.w_hidden = Matrix(params.w_hidden.rows(), params.w_hidden.cols());
  g.b_hidden.assign(params.b_hidden.size(), 0.0);
  g.w_out.assign(params.w_out.size(), 0.0);
  g.b_out = 0.0;
  return g;
}

ForwardCache forward(const SampleView& sample, const ModelParams& params) {
  ForwardCache cache;
  cache.geo = attention_block_forward(sample.geo, params.geo_block);
  cache.euc = attention_block_forward(sample.euc, params.euc_block);

  cache.concat.clear();
  cache.concat.reserve(sample.target_features.size() + 2 + cache.euc.output.size() +
                       cache.geo.output.size());
  cache.concat.insert(cache.concat.end(), sample.target_features.begin(),
                      sample.target_features.end());
  const auto& geo = params.geo_block;
  cache.concat.push_back((sample.target_point.lat - geo.lat_offset) * geo.lat_scale);
  cache.concat.push_back((sample.target_point.lon - geo.lon_offset) * geo.lon_scale);
  cache.concat.insert(cache.concat.end(), cache.euc.output.begin(), cache.euc.output.end());
  cache.concat.insert(cache.concat.end(), cache.geo.output.begin(), cache.geo.output.end());

  if (params.w_hidden.cols() != cache.concat.size()) {
    throw DimensionError("forward: hidden layer expects " + std::to_string(params.w_hidden.cols()) +
                         " inputs, concat has " + std::to_string(cache.concat.size()));
  }
  matvec_into(params.w_hidden, cache.concat, cache.hidden_pre);
  axpy(1.0, params.b_hidden, cache.hidden_pre);
  cache.embedding.resize(cache.hidden_pre.size());
  for (std::size_t i = 0; i < cache.embedding.size(); ++i) {
    cache.embedding[i] = apply_activation(params.hidden_activation, cache.hidden_pre[i]);
  }
  if (params.w_out.size() != cache.embedding.size()) {
    throw DimensionError("forward: output layer width mismatch");
  }
  const double out_pre = dot(params.w_out, cache.embedding) + params.b_out;
  cache.prediction = apply_activation(params.output_activation, out_pre);
  return cache;
}

double loss_mse(double pred, double target) {
  const double r = pred - target;
  return r * r;
}

void backward_accumulate(const ForwardCache& cache, double d_pred, const ModelParams& params,
                         Gradients& grads) {
  if (cache.concat.size() != params.w_hidden.cols() ||
      cache.embedding.size() != params.w_out.size() ||
      grads.w_hidden.rows() != params.w_hidden.rows() ||
      grads.w_out.size() != params.w_out.size()) {
    throw StateError("backward: cache does not match parameter shapes");
  }

  // Output activation is linear for the regression layer; keep the general
  // form so relu/elu variants stay correct.
  const double out_pre = dot(params.w_out, cache.embedding) + params.b_out;
  const double d_out_pre = d_pred * activation_derivative(params.output_activation, out_pre);

  grads.b_out += d_out_pre;
  Vec d_embedding(cache.embedding.size());
  for (std::size_t i = 0; i < cache.embedding.size(); ++i) {
    grads.w_out[i] += d_out_pre * cache.embedding[i];
    d_embedding[i] = d_out_pre * params.w_out[i];
  }

  Vec d_hidden_pre(cache.hidden_pre.size());
  for (std::size_t i = 0; i < d_hidden_pre.size(); ++i) {
    d_hidden_pre[i] =
        d_embedding[i] * activation_derivative(params.hidden_activation, cache.hidden_pre[i]);
  }
  add_outer(grads.w_hidden, d_hidden_pre, cache.concat);
  axpy(1.0, d_hidden_pre, grads.b_hidden);

  Vec d_concat;
  matvec_transpose_into(params.w_hidden, d_hidden_pre, d_concat);

  const std::size_t t = cache.concat.size() - 2 - cache.euc.output.size() - cache.geo.output.size();
  const std::size_t euc_begin = t + 2;
  const std::size_t geo_begin = euc_begin + cache.euc.output.size();
  const Vec d_euc(d_concat.begin() + static_cast<std::ptrdiff_t>(euc_begin),
                  d_concat.begin() + static_cast<std::ptrdiff_t>(geo_begin));
  const Vec d_geo(d_concat.begin() + static_cast<std::ptrdiff_t>(geo_begin), d_concat.end());

  attention_block_backward(d_euc, cache.euc, params.euc_block, grads.euc);
  attention_block_backward(d_geo, cache.geo, params.geo_block, grads.geo);
}

Gradients backward(const ForwardCache& cache, double d_pred, const ModelParams& params) {
  Gradients grads = make_zero_gradients(params);
  backward_accumulate(cache, d_pred, params, grads);
  return grads;
}

namespace {

// The one place that defines flat parameter order.
template <class P, class Fn>
void visit_params(P& params, const Fn& fn) {
  auto visit_block = [&](auto& block) {
    for (auto& head : block.heads) {
      for (auto& v : head.w_sim.data()) fn(v);
      for (auto& v : head.b_sim) fn(v);
      for (auto& v : head.w_gate.data()) fn(v);
      for (auto& v : head.b_gate) fn(v);
    }
    for (auto& v : block.agg.weight) fn(v);
    for (auto& v : block.agg.bias) fn(v);
  };
  visit_block(params.geo_block);
  visit_block(params.euc_block);
  for (auto& v : params.w_hidden.data()) fn(v);
  for (auto& v : params.b_hidden) fn(v);
  for (auto& v : params.w_out) fn(v);
  fn(params.b_out);
}

template <class Fn>
void visit_grads(const Gradients& grads, const Fn& fn) {
  auto visit_block = [&](const BlockGrads& block) {
    for (const auto& head : block.heads) {
      for (double v : head.w_sim.data()) fn(v);
      for (double v : head.b_sim) fn(v);
      for (double v : head.w_gate.data()) fn(v);
      for (double v : head.b_gate) fn(v);
    }
    for (double v : block.agg_weight) fn(v);
    for (double v : block.agg_bias) fn(v);
  };
  visit_block(grads.geo);
  visit_block(grads.euc);
  for (double v : grads.w_hidden.data()) fn(v);
  for (double v : grads.b_hidden) fn(v);
  for (double v : grads.w_out) fn(v);
  fn(grads.b_out);
}

}  // namespace

void for_each_param(ModelParams& params, const std::function<void(double&)>& fn) {
  visit_params(params, fn);
}

void for_each_param(const ModelParams& params, const std::function<void(double)>& fn) {
  visit_params(params, [&](const double& v) { fn(v); });
}

void for_each_param_pair(ModelParams& params, const Gradients& grads,
                         const std::function<void(double&, double)>& fn) {
  Vec flat_grads;
  visit_grads(grads, [&](double v) { flat_grads.push_back(v); });
  std::size_t i = 0;
  visit_params(params, [&](double& v) {
    if (i >= flat_grads.size()) throw DimensionError("parameter/gradient count mismatch");
    fn(v, flat_grads[i++]);
  });
  if (i != flat_grads.size()) throw DimensionError("parameter/gradient count mismatch");
}

std::size_t param_count(const ModelParams& params) {
  std::size_t n = 0;
  visit_params(params, [&](const double&) { ++n; });
  return n;
}

GradCheckReport gradient_check(const ModelParams& params, const SampleView& sample,
                               double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw ConfigError("gradient_check: epsilon must lie in [1e-7, 1e-3]");
  }

  const ForwardCache cache = forward(sample, params);
  const Gradients grads = backward(cache, 1.0, params);
  Vec analytic;
  visit_grads(grads, [&](double v) { analytic.push_back(v); });

  ModelParams probe = params;
  std::vector<double*> slots;
  visit_params(probe, [&](double& v) { slots.push_back(&v); });
  if (slots.size() != analytic.size()) throw StateError("gradient_check: traversal mismatch");

  const std::size_t output_layer_begin = slots.size() - probe.w_out.size() - 1;
  GradCheckReport report;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + epsilon;
    const double f_plus = forward(sample, probe).prediction;
    *slots[k] = saved - epsilon;
    const double f_minus = forward(sample, probe).prediction;
    *slots[k] = saved;

    const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
    const double rel =
        std::abs(analytic[k] - numeric) / std::max(1e-8, std::abs(analytic[k]) + std::abs(numeric));
    report.max_rel_err = std::max(report.max_rel_err, rel);
    if (k >= output_layer_begin) {
      report.output_layer_max_rel_err = std::max(report.output_layer_max_rel_err, rel);
    }
  }
  return report;
}

SampleView make_sample_view(const Dataset& queries, std::size_t row, const NeighborIndex& index,
                            const Dataset& pool, const IdMap& pool_map) {
  const HouseRecord& target = queries.records[row];
  const IndexEntry& entry = index.entry_for(target.id);

  SampleView view;
  view.target_features = target.features;
  view.target_point = {target.lat, target.lon};

  view.geo.coords.reserve(entry.geo.size());
  view.geo.features.reserve(entry.geo.size());
  view.geo.prices.reserve(entry.geo.size());
  view.geo.distances.reserve(entry.geo.size());
  for (const auto& nb : entry.geo) {
    const HouseRecord& rec = pool.records[pool_map.row_for(nb.id)];
    view.geo.coords.push_back({rec.lat, rec.lon});
    view.geo.features.push_back(rec.features);
    view.geo.prices.push_back(rec.price);
    view.geo.distances.push_back(nb.distance);
  }

  view.euc.features.reserve(entry.euc.size());
  view.euc.prices.reserve(entry.euc.size());
  view.euc.distances.reserve(entry.euc.size());
  for (const auto& nb : entry.euc) {
    const HouseRecord& rec = pool.records[pool_map.row_for(nb.id)];
    view.euc.features.push_back(rec.features);
    view.euc.prices.push_back(rec.price);
    view.euc.distances.push_back(nb.distance);
  }
  return view;
}

std::vector<HouseEmbedding> embed_dataset(const Dataset& ds, const NeighborIndex& index,
                                          const Dataset& pool, const ModelParams& params,
                                          unsigned threads, Vec* predictions) {
  const IdMap pool_map(pool);
  std::vector<HouseEmbedding> embeddings(ds.size());
  if (predictions) predictions->assign(ds.size(), 0.0);

  parallel_for_chunks(ds.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const SampleView view = make_sample_view(ds, i, index, pool, pool_map);
      ForwardCache cache = forward(view, params);
      embeddings[i].house_id = ds.records[i].id;
      embeddings[i].values = std::move(cache.embedding);
      if (predictions) (*predictions)[i] = cache.prediction;
    }
  });
  return embeddings;
}

}  // namespace gam
