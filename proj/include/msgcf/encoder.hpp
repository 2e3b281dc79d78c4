#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "msgcf/autodiff.hpp"
#include "msgcf/tensor.hpp"

namespace msgcf::encoder {

/// Stack of (conv k x k -> 2x2 maxpool -> ReLU) blocks, global average
/// pooling, then an affine projection to the embedding.
struct EncoderConfig {
  std::size_t side = 64;
  std::vector<std::size_t> channels{16, 32, 32};  // one entry per block
  std::size_t kernel = 3;
  std::size_t embedding_dim = 64;

  std::size_t blocks() const { return channels.size(); }
};

/// Spatial side after each block; throws ConfigError if the chain collapses.
std::vector<std::size_t> block_sides(const EncoderConfig& config);

template <class T>
struct ConvBlock {
  T kernels;  // [c_out x c_in x k x k]
  T bias;     // [c_out]
};

template <class T>
struct EncoderWeights {
  std::vector<ConvBlock<T>> blocks;
  T proj_weight;  // [c_last x f_e]
  T proj_bias;    // [f_e]
};

/// Visits tensors in checkpoint order: per block (kernels, bias), then the
/// projection weight and bias.
template <class W, class F>
void for_each_tensor(W& w, F&& f) {
  for (auto& b : w.blocks) {
    f(b.kernels);
    f(b.bias);
  }
  f(w.proj_weight);
  f(w.proj_bias);
}

template <class U, class T, class F>
EncoderWeights<U> map_weights(const EncoderWeights<T>& w, F&& f) {
  EncoderWeights<U> out;
  for (const auto& b : w.blocks) out.blocks.push_back({f(b.kernels), f(b.bias)});
  out.proj_weight = f(w.proj_weight);
  out.proj_bias = f(w.proj_bias);
  return out;
}

struct EncoderParams {
  EncoderConfig config;
  EncoderWeights<Tensor> weights;
};

using EncoderVars = EncoderWeights<ad::Var>;

/// Glorot-uniform kernels and projection, zero biases.
EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Registers the weights on `tape`, as parameters or as constants.
EncoderVars bind(ad::Tape& tape, const EncoderWeights<Tensor>& weights, bool trainable);

ad::Var encode(const EncoderConfig& config, const EncoderVars& vars, ad::Var image);
ad::Var encode_batch(const EncoderConfig& config, const EncoderVars& vars, std::span<const ad::Var> images);

Tensor encode(const EncoderParams& params, const Tensor& image);
Tensor encode_batch(const EncoderParams& params, std::span<const Tensor> images);

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace msgcf::encoder
