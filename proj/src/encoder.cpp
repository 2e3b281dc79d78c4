#include "msgcf/encoder.hpp"

#include <cmath>
#include <string>

namespace msgcf::encoder {

std::vector<std::size_t> block_sides(const EncoderConfig& config) {
  if (config.channels.empty() || config.kernel == 0 || config.embedding_dim == 0 || config.side == 0) {
    throw ConfigError("encoder: need at least one block and positive kernel, side and embedding size");
  }
  std::vector<std::size_t> sides;
  std::size_t side = config.side;
  for (std::size_t b = 0; b < config.blocks(); ++b) {
    if (config.channels[b] == 0) throw ConfigError("encoder: block " + std::to_string(b) + " has zero channels");
    if (side < config.kernel || (side - config.kernel + 1) < 2) {
      throw ConfigError("encoder: a " + std::to_string(config.side) + "-pixel image is exhausted before block " +
                        std::to_string(b + 1) + " of " + std::to_string(config.blocks()));
    }
    side = (side - config.kernel + 1) / 2;
    sides.push_back(side);
  }
  return sides;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  block_sides(config);
  std::mt19937_64 rng(seed);
  EncoderParams p{config, {}};
  const std::size_t k = config.kernel;
  std::size_t c_in = 1;
  for (std::size_t c_out : config.channels) {
    p.weights.blocks.push_back(
        {glorot_uniform(Shape{c_out, c_in, k, k}, c_in * k * k, c_out * k * k, rng), Tensor(Shape{c_out})});
    c_in = c_out;
  }
  p.weights.proj_weight = glorot_uniform(Shape{c_in, config.embedding_dim}, c_in, config.embedding_dim, rng);
  p.weights.proj_bias = Tensor(Shape{config.embedding_dim});
  return p;
}

EncoderVars bind(ad::Tape& tape, const EncoderWeights<Tensor>& weights, bool trainable) {
  return map_weights<ad::Var>(weights, [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); });
}

ad::Var encode(const EncoderConfig& config, const EncoderVars& vars, ad::Var image) {
  const Shape expected{1, config.side, config.side};
  if (image.shape() != expected) {
    throw DimensionError("encode: expected image " + to_string(expected) + ", got " + to_string(image.shape()));
  }
  ad::Var y = image;
  for (const auto& block : vars.blocks) y = ad::relu(ad::maxpool2(ad::conv2d(y, block.kernels, block.bias)));
  ad::Var pooled = ad::channel_mean(y);
  const std::size_t c = pooled.value().size();
  ad::Var out = ad::linear(ad::reshape(pooled, Shape{1, c}), vars.proj_weight, vars.proj_bias);
  return ad::reshape(out, Shape{config.embedding_dim});
}

ad::Var encode_batch(const EncoderConfig& config, const EncoderVars& vars, std::span<const ad::Var> images) {
  std::vector<ad::Var> rows;
  rows.reserve(images.size());
  for (const ad::Var& img : images) rows.push_back(encode(config, vars, img));
  return ad::stack_rows(rows);
}

Tensor encode(const EncoderParams& params, const Tensor& image) {
  ad::Tape tape;
  const EncoderVars vars = bind(tape, params.weights, false);
  return encode(params.config, vars, tape.constant(image)).value();
}

Tensor encode_batch(const EncoderParams& params, std::span<const Tensor> images) {
  ad::Tape tape;
  const EncoderVars vars = bind(tape, params.weights, false);
  std::vector<ad::Var> imgs;
  imgs.reserve(images.size());
  for (const Tensor& t : images) imgs.push_back(tape.constant(t));
  return encode_batch(params.config, vars, imgs).value();
}

}  // namespace msgcf::encoder
