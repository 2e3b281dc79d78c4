#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msgcf/autodiff.hpp"
#include "msgcf/encoder.hpp"
#include "msgcf/episodes.hpp"
#include "msgcf/graph_spectral.hpp"

namespace msgcf::model {

enum class CombineMode { product, sum };

std::string to_string(CombineMode mode);
CombineMode parse_combine_mode(const std::string& text);

struct ModelConfig {
  std::size_t n_way = 5;
  std::size_t layers = 3;
  std::size_t hidden_width = 48;
  bool splice = true;      // local channel: layer k consumes X_{k-1} (+) X_{k-2}
  bool use_global = true;  // parallel single-layer channel on X0
  CombineMode combine = CombineMode::product;
  encoder::EncoderConfig encoder;

  std::size_t node_feature_dim() const { return encoder.embedding_dim + n_way; }
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
};

/// Input/output widths of every local layer; throws ConfigError on a broken
/// configuration.
std::vector<LayerShape> local_layer_shapes(const ModelConfig& config);

/// Per-pair edge scorer: two ReLU hidden layers of the input width, then an
/// affine map to one score.
template <class T>
struct ScorerWeights {
  T w1, b1, w2, b2, w3, b3;
};

template <class T>
struct LayerWeights {
  ScorerWeights<T> scorer;
  T theta;  // [f_in x f_out]
};

template <class T>
struct MsgcfWeights {
  encoder::EncoderWeights<T> encoder;
  std::vector<LayerWeights<T>> local;
  std::optional<LayerWeights<T>> global;
};

template <class L, class F>
void for_each_layer_tensor(L& layer, F& f) {
  f(layer.scorer.w1);
  f(layer.scorer.b1);
  f(layer.scorer.w2);
  f(layer.scorer.b2);
  f(layer.scorer.w3);
  f(layer.scorer.b3);
  f(layer.theta);
}

/// Fixed traversal order shared by checkpoints, the optimizer and gradient
/// collection: encoder, local layers in order, then the global layer.
template <class W, class F>
void for_each_tensor(W& w, F&& f) {
  encoder::for_each_tensor(w.encoder, f);
  for (auto& layer : w.local) for_each_layer_tensor(layer, f);
  if (w.global) for_each_layer_tensor(*w.global, f);
}

template <class U, class T, class F>
LayerWeights<U> map_layer(const LayerWeights<T>& l, F& f) {
  return {{f(l.scorer.w1), f(l.scorer.b1), f(l.scorer.w2), f(l.scorer.b2), f(l.scorer.w3), f(l.scorer.b3)},
          f(l.theta)};
}

template <class U, class T, class F>
MsgcfWeights<U> map_weights(const MsgcfWeights<T>& w, F&& f) {
  MsgcfWeights<U> out;
  out.encoder = encoder::map_weights<U>(w.encoder, f);
  for (const auto& l : w.local) out.local.push_back(map_layer<U>(l, f));
  if (w.global) out.global = map_layer<U>(*w.global, f);
  return out;
}

struct MsgcfParams {
  ModelConfig config;
  MsgcfWeights<Tensor> weights;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t parameter_count() const;
};

using MsgcfVars = MsgcfWeights<ad::Var>;

MsgcfParams init_msgcf(const ModelConfig& config, std::uint64_t seed);
MsgcfVars bind(ad::Tape& tape, const MsgcfParams& params, bool trainable);
/// Parameter node ids in `for_each_tensor` order.
std::vector<ad::NodeId> parameter_ids(const MsgcfVars& vars);

/// W[i, j, :] = |x_i - x_j|.
Tensor pairwise_abs_diff(const Tensor& x);
ad::Var pairwise_abs_diff(ad::Var x);

/// Sets the diagonal of a square matrix to zero.
ad::Var zero_diagonal(ad::Var a);

/// s_ij = softplus(scorer(W[i, j, :])) with a zero diagonal.
ad::Var edge_adjacency(ad::Var w, const ScorerWeights<ad::Var>& scorer);
graph::Adjacency edge_adjacency(const Tensor& w, const ScorerWeights<Tensor>& scorer);

struct StepOutput {
  ad::Var output;
  ad::Var propagation;
};

/// One local-channel layer (1-based `k`). With `x_prev2` the input is the
/// splice X_{k-1} (+) X_{k-2}. `final_layer` skips the ReLU.
StepOutput local_step(std::size_t k, ad::Var x_prev, std::optional<ad::Var> x_prev2, const LayerWeights<ad::Var>& layer,
                      bool final_layer);

/// Single GCN step on X0 without activation, restricted to the first
/// `n_query` rows.
StepOutput global_channel(ad::Var x0, const LayerWeights<ad::Var>& layer, std::size_t n_query);

struct Prediction {
  Tensor probabilities;  // [N*Q x N]
  std::vector<std::size_t> labels;
};

Prediction predict(const Tensor& combined_logits);

/// Combined query logits: local (x) global for product, local + global for sum.
ad::Var combine_logits(ad::Var local_query, ad::Var global_query, CombineMode mode);
Prediction readout(const Tensor& local_query, const Tensor& global_query, CombineMode mode);

struct ForwardTrace {
  ad::Var logits;  // combined query logits [N*Q x N]
  std::vector<ad::Var> local_outputs;
  std::vector<ad::Var> local_propagations;
  std::optional<ad::Var> global_propagation;
};

/// Local chain plus optional global channel from assembled node features X0
/// (query rows first).
ForwardTrace forward(const ModelConfig& config, const MsgcfVars& vars, ad::Var x0, std::size_t n_query);

Prediction forward(const MsgcfParams& params, const episodes::EpisodeFeatures& features);

/// Mean over queries of the cross entropy on the combined logits.
ad::Var episode_loss(ad::Var logits, std::span<const std::size_t> labels);
double episode_loss(const Prediction& pred, std::span<const std::size_t> labels);

/// Encodes every episode item, assembles X0 and runs `forward`.
ForwardTrace run_episode(const ModelConfig& config, const MsgcfVars& vars, const episodes::SignalDataset& dataset,
                         const episodes::Episode& episode, bool zero_support_labels = false);

double accuracy(const Prediction& pred, std::span<const std::size_t> labels);

}  // namespace msgcf::model
