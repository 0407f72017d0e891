#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gam/attention.hpp"
#include "gam/dataset.hpp"
#include "gam/linalg.hpp"
#include "gam/spatial.hpp"

namespace gam {

enum class Activation { linear, relu, elu };

double apply_activation(Activation act, double x);
double activation_derivative(Activation act, double pre);

// Full network: both attention blocks, the embedding hidden layer over
// [features | coords | euc context | geo context], and a linear regression
// output.
struct ModelParams {
  AttentionBlockParams geo_block;
  AttentionBlockParams euc_block;
  Matrix w_hidden;
  Vec b_hidden;
  Vec w_out;
  double b_out = 0.0;
  Activation hidden_activation = Activation::elu;
  Activation output_activation = Activation::linear;

  std::size_t nodes() const { return b_hidden.size(); }
  // concat length is 3T + 7; recovers T from the hidden layer width.
  std::size_t feature_count() const { return (w_hidden.cols() - 7) / 3; }
};

struct SampleView {
  std::span<const double> target_features;
  GeoPoint target_point;
  NeighborInputs geo;
  NeighborInputs euc;
};

struct ForwardCache {
  BlockCache geo;
  BlockCache euc;
  Vec concat;
  Vec hidden_pre;
  Vec embedding;
  double prediction = 0.0;
};

struct Gradients {
  BlockGrads geo;
  BlockGrads euc;
  Matrix w_hidden;
  Vec b_hidden;
  Vec w_out;
  double b_out = 0.0;
};

struct HouseEmbedding {
  std::int64_t house_id = 0;
  Vec values;
};

Gradients make_zero_gradients(const ModelParams& params);

ForwardCache forward(const SampleView& sample, const ModelParams& params);

double loss_mse(double pred, double target);

void backward_accumulate(const ForwardCache& cache, double d_pred, const ModelParams& params,
                         Gradients& grads);
Gradients backward(const ForwardCache& cache, double d_pred, const ModelParams& params);

// Canonical parameter traversal; every consumer of the flat parameter order
// (Adam moments, serialization, gradient checks) shares this.
void for_each_param(ModelParams& params, const std::function<void(double&)>& fn);
void for_each_param(const ModelParams& params, const std::function<void(double)>& fn);
void for_each_param_pair(ModelParams& params, const Gradients& grads,
                         const std::function<void(double&, double)>& fn);
std::size_t param_count(const ModelParams& params);

struct GradCheckReport {
  double max_rel_err = 0.0;
  double output_layer_max_rel_err = 0.0;  // over w_out and b_out only
};

// Central finite differences of the prediction against the analytic backward
// pass; epsilon must lie in [1e-7, 1e-3].
GradCheckReport gradient_check(const ModelParams& params, const SampleView& sample,
                               double epsilon);

// Builds the per-sample view from a query row, its index entry, and the
// neighbor pool. Distances come from the index; features are spans into pool
// records, so the pool must outlive the view.
SampleView make_sample_view(const Dataset& queries, std::size_t row, const NeighborIndex& index,
                            const Dataset& pool, const IdMap& pool_map);

std::vector<HouseEmbedding> embed_dataset(const Dataset& ds, const NeighborIndex& index,
                                          const Dataset& pool, const ModelParams& params,
                                          unsigned threads = 0, Vec* predictions = nullptr);

}  // namespace gam
