#include "msgcf/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace msgcf::model {

using msgcf::to_string;

std::string to_string(CombineMode mode) { return mode == CombineMode::product ? "product" : "sum"; }

CombineMode parse_combine_mode(const std::string& text) {
  if (text == "product") return CombineMode::product;
  if (text == "sum") return CombineMode::sum;
  throw ConfigError("combine_mode must be 'product' or 'sum', got '" + text + "'");
}

std::vector<LayerShape> local_layer_shapes(const ModelConfig& config) {
  if (config.n_way < 2) throw ConfigError("model: n_way must be at least 2");
  if (config.layers == 0) throw ConfigError("model: need at least one local layer");
  if (config.hidden_width == 0) throw ConfigError("model: hidden_width must be positive");
  const std::size_t fm = config.node_feature_dim();
  std::vector<LayerShape> shapes;
  std::size_t out_prev2 = fm, out_prev = fm;
  for (std::size_t k = 1; k <= config.layers; ++k) {
    LayerShape s;
    s.in = (k == 1 || !config.splice) ? out_prev : out_prev + out_prev2;
    s.out = k == config.layers ? config.n_way : config.hidden_width;
    shapes.push_back(s);
    out_prev2 = out_prev;
    out_prev = s.out;
  }
  return shapes;
}

std::vector<Tensor*> MsgcfParams::tensors() {
  std::vector<Tensor*> out;
  for_each_tensor(weights, [&](Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> MsgcfParams::tensors() const {
  std::vector<const Tensor*> out;
  for_each_tensor(weights, [&](const Tensor& t) { out.push_back(&t); });
  return out;
}

std::size_t MsgcfParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

namespace {

LayerWeights<Tensor> init_layer(const LayerShape& shape, std::mt19937_64& rng) {
  const std::size_t f = shape.in;
  LayerWeights<Tensor> l;
  l.scorer.w1 = encoder::glorot_uniform(Shape{f, f}, f, f, rng);
  l.scorer.b1 = Tensor(Shape{f});
  l.scorer.w2 = encoder::glorot_uniform(Shape{f, f}, f, f, rng);
  l.scorer.b2 = Tensor(Shape{f});
  l.scorer.w3 = encoder::glorot_uniform(Shape{f, 1}, f, 1, rng);
  l.scorer.b3 = Tensor(Shape{1});
  l.theta = encoder::glorot_uniform(Shape{shape.in, shape.out}, shape.in, shape.out, rng);
  return l;
}

}  // namespace

MsgcfParams init_msgcf(const ModelConfig& config, std::uint64_t seed) {
  const std::vector<LayerShape> shapes = local_layer_shapes(config);
  MsgcfParams p;
  p.config = config;
  p.weights.encoder = encoder::init_encoder(config.encoder, seed).weights;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (const LayerShape& s : shapes) p.weights.local.push_back(init_layer(s, rng));
  if (config.use_global) p.weights.global = init_layer({config.node_feature_dim(), config.n_way}, rng);
  return p;
}

MsgcfVars bind(ad::Tape& tape, const MsgcfParams& params, bool trainable) {
  return map_weights<ad::Var>(params.weights,
                              [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); });
}

std::vector<ad::NodeId> parameter_ids(const MsgcfVars& vars) {
  std::vector<ad::NodeId> ids;
  for_each_tensor(vars, [&](const ad::Var& v) { ids.push_back(v.id()); });
  return ids;
}

Tensor pairwise_abs_diff(const Tensor& x) {
  require_rank(x, 2, "pairwise_abs_diff");
  const std::size_t n = x.dim(0), f = x.dim(1);
  Tensor w(Shape{n, n, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < f; ++c) w(i, j, c) = std::abs(x(i, c) - x(j, c));
  return w;
}

ad::Var pairwise_abs_diff(ad::Var x) {
  Tensor w = pairwise_abs_diff(x.value());
  const std::size_t n = x.value().dim(0), f = x.value().dim(1);
  const ad::NodeId ix = x.id();
  return x.tape().record(ad::OpKind::pairwise_abs_diff, {ix}, std::move(w),
                         [ix, n, f](const ad::Tape& t, const Tensor& g, ad::GradSink& s) {
                           const Tensor& xv = t.value(ix);
                           Tensor& gx = s.at(ix);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               for (std::size_t c = 0; c < f; ++c) {
                                 const double d = xv(i, c) - xv(j, c);
                                 if (d == 0.0) continue;
                                 const double gv = d > 0.0 ? g(i, j, c) : -g(i, j, c);
                                 gx(i, c) += gv;
                                 gx(j, c) -= gv;
                               }
                         });
}

ad::Var zero_diagonal(ad::Var a) {
  const Tensor& av = a.value();
  require_rank(av, 2, "zero_diagonal");
  const std::size_t n = av.dim(0);
  if (av.dim(1) != n) throw DimensionError("zero_diagonal: not square, " + to_string(av.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 0.0;
  const ad::NodeId ia = a.id();
  return a.tape().record(ad::OpKind::zero_diagonal, {ia}, std::move(out),
                         [ia, n](const ad::Tape&, const Tensor& g, ad::GradSink& s) {
                           Tensor& ga = s.at(ia);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               if (i != j) ga(i, j) += g(i, j);
                         });
}

ad::Var edge_adjacency(ad::Var w, const ScorerWeights<ad::Var>& scorer) {
  const Tensor& wv = w.value();
  require_rank(wv, 3, "edge_adjacency");
  const std::size_t n = wv.dim(0), f = wv.dim(2);
  if (wv.dim(1) != n) throw DimensionError("edge_adjacency: pair grid not square, " + to_string(wv.shape()));
  if (scorer.w1.value().dim(0) != f) {
    throw DimensionError("edge_adjacency: scorer expects " + std::to_string(scorer.w1.value().dim(0)) +
                         " features, pair grid has " + std::to_string(f));
  }
  ad::Var pairs = ad::reshape(w, Shape{n * n, f});
  ad::Var h = ad::relu(ad::linear(pairs, scorer.w1, scorer.b1));
  h = ad::relu(ad::linear(h, scorer.w2, scorer.b2));
  ad::Var score = ad::softplus(ad::linear(h, scorer.w3, scorer.b3));
  return zero_diagonal(ad::reshape(score, Shape{n, n}));
}

graph::Adjacency edge_adjacency(const Tensor& w, const ScorerWeights<Tensor>& scorer) {
  ad::Tape tape;
  const ScorerWeights<ad::Var> vars{tape.constant(scorer.w1), tape.constant(scorer.b1), tape.constant(scorer.w2),
                                    tape.constant(scorer.b2), tape.constant(scorer.w3), tape.constant(scorer.b3)};
  return graph::Adjacency(edge_adjacency(tape.constant(w), vars).value());
}

StepOutput local_step(std::size_t k, ad::Var x_prev, std::optional<ad::Var> x_prev2, const LayerWeights<ad::Var>& layer,
                      bool final_layer) {
  if (k == 0) throw ContractError("local_step: layers are numbered from 1");
  ad::Var input = x_prev2 ? ad::concat_cols(x_prev, *x_prev2) : x_prev;
  if (input.value().dim(1) != layer.theta.value().dim(0)) {
    throw DimensionError("local_step " + std::to_string(k) + ": input width " +
                         std::to_string(input.value().dim(1)) + " does not match layer width " +
                         std::to_string(layer.theta.value().dim(0)));
  }
  ad::Var adjacency = edge_adjacency(pairwise_abs_diff(input), layer.scorer);
  ad::Var p = graph::renormalized_propagation(adjacency);
  return {graph::gcn_propagate(p, input, layer.theta, !final_layer), p};
}

StepOutput global_channel(ad::Var x0, const LayerWeights<ad::Var>& layer, std::size_t n_query) {
  if (x0.value().dim(1) != layer.theta.value().dim(0)) {
    throw DimensionError("global_channel: feature width " + std::to_string(x0.value().dim(1)) +
                         " does not match layer width " + std::to_string(layer.theta.value().dim(0)));
  }
  ad::Var adjacency = edge_adjacency(pairwise_abs_diff(x0), layer.scorer);
  ad::Var p = graph::renormalized_propagation(adjacency);
  ad::Var out = graph::gcn_propagate(p, x0, layer.theta, false);
  return {ad::select_rows(out, 0, n_query), p};
}

Prediction predict(const Tensor& combined_logits) {
  Prediction pred{ad::softmax_rows(combined_logits), {}};
  const std::size_t n = combined_logits.dim(0), m = combined_logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = pred.probabilities.raw() + i * m;
    pred.labels.push_back(static_cast<std::size_t>(std::max_element(row, row + m) - row));
  }
  return pred;
}

ad::Var combine_logits(ad::Var local_query, ad::Var global_query, CombineMode mode) {
  if (local_query.shape() != global_query.shape()) {
    throw DimensionError("readout: local logits " + to_string(local_query.shape()) + " vs global " +
                         to_string(global_query.shape()));
  }
  return mode == CombineMode::product ? ad::hadamard(local_query, global_query) : ad::add(local_query, global_query);
}

Prediction readout(const Tensor& local_query, const Tensor& global_query, CombineMode mode) {
  ad::Tape tape;
  return predict(combine_logits(tape.constant(local_query), tape.constant(global_query), mode).value());
}

ForwardTrace forward(const ModelConfig& config, const MsgcfVars& vars, ad::Var x0, std::size_t n_query) {
  if (vars.local.size() != config.layers) throw DimensionError("forward: parameter layer count does not match config");
  if (x0.value().rank() != 2 || x0.value().dim(1) != config.node_feature_dim() || n_query > x0.value().dim(0)) {
    throw DimensionError("forward: node features " + to_string(x0.shape()) + " do not fit a " +
                         std::to_string(config.n_way) + "-way model");
  }
  ForwardTrace trace;
  ad::Var prev = x0;
  std::optional<ad::Var> prev2;
  for (std::size_t k = 1; k <= config.layers; ++k) {
    const bool splice_now = config.splice && k >= 2;
    StepOutput step = local_step(k, prev, splice_now ? prev2 : std::nullopt, vars.local[k - 1], k == config.layers);
    trace.local_outputs.push_back(step.output);
    trace.local_propagations.push_back(step.propagation);
    prev2 = prev;
    prev = step.output;
  }
  ad::Var local_query = ad::select_rows(prev, 0, n_query);
  if (config.use_global) {
    if (!vars.global) throw DimensionError("forward: global channel enabled but no global parameters");
    StepOutput g = global_channel(x0, *vars.global, n_query);
    trace.global_propagation = g.propagation;
    trace.logits = combine_logits(local_query, g.output, config.combine);
  } else {
    trace.logits = local_query;
  }
  return trace;
}

Prediction forward(const MsgcfParams& params, const episodes::EpisodeFeatures& features) {
  ad::Tape tape;
  const MsgcfVars vars = bind(tape, params, false);
  const std::size_t n_query = features.query_end - features.query_begin;
  return predict(forward(params.config, vars, tape.constant(features.x_input), n_query).logits.value());
}

ad::Var episode_loss(ad::Var logits, std::span<const std::size_t> labels) {
  return ad::softmax_cross_entropy(logits, labels);
}

double episode_loss(const Prediction& pred, std::span<const std::size_t> labels) {
  const std::size_t n = pred.probabilities.dim(0), m = pred.probabilities.dim(1);
  if (labels.size() != n) throw DimensionError("episode_loss: label count does not match predictions");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= m) throw IndexError("episode_loss: label " + std::to_string(labels[i]) + " out of range");
    loss -= std::log(pred.probabilities(i, labels[i]));
  }
  return loss / static_cast<double>(n);
}

ForwardTrace run_episode(const ModelConfig& config, const MsgcfVars& vars, const episodes::SignalDataset& dataset,
                         const episodes::Episode& episode, bool zero_support_labels) {
  if (episode.n_way != config.n_way) {
    throw DimensionError("run_episode: " + std::to_string(episode.n_way) + "-way episode for a " +
                         std::to_string(config.n_way) + "-way model");
  }
  ad::Tape& tape = vars.local.front().theta.tape();
  std::vector<ad::Var> images;
  for (const episodes::EpisodeItem& item : episodes::episode_items(episode)) {
    const auto& window = dataset.classes.at(item.class_id).windows.at(item.window_index);
    images.push_back(tape.constant(episodes::window_to_image(window, config.encoder.side)));
  }
  ad::Var embeddings = encoder::encode_batch(config.encoder, vars.encoder, images);
  ad::Var x0;
  if (zero_support_labels) {
    const std::vector<std::size_t> order = episodes::node_order(episode);
    x0 = ad::concat_cols(ad::gather_rows(embeddings, order),
                         tape.constant(Tensor(Shape{episode.num_nodes(), episode.n_way})));
  } else {
    x0 = episodes::assemble_node_features(embeddings, episode);
  }
  return forward(config, vars, x0, episode.query.size());
}

double accuracy(const Prediction& pred, std::span<const std::size_t> labels) {
  if (labels.size() != pred.labels.size()) throw DimensionError("accuracy: label count does not match predictions");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred.labels[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace msgcf::model
