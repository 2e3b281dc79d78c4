#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msgcf/tensor.hpp"

namespace msgcf::harness {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

AdamState make_adam_state(std::span<const Tensor* const> params);

double global_norm(std::span<const Tensor> grads);

/// Rescales `grads` in place so their joint L2 norm is at most `clip`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double clip);

/// Global-norm clipping followed by one bias-corrected Adam update.
/// Returns the pre-clip gradient norm.
double adam_step(std::span<Tensor* const> params, std::span<Tensor> grads, AdamState& state, const AdamConfig& config);

}  // namespace msgcf::harness
