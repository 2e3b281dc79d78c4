#include "msgcf/adam.hpp"

#include <cmath>
#include <string>

namespace msgcf::harness {

AdamState make_adam_state(std::span<const Tensor* const> params) {
  AdamState s;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

double global_norm(std::span<const Tensor> grads) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.data()) sq += v * v;
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Tensor> grads, double clip) {
  const double norm = global_norm(grads);
  if (clip > 0.0 && norm > clip) {
    const double factor = clip / norm;
    for (Tensor& g : grads)
      for (double& v : g.data()) v *= factor;
  }
  return norm;
}

double adam_step(std::span<Tensor* const> params, std::span<Tensor> grads, AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || state.m[i].shape() != grads[i].shape()) {
      throw DimensionError("adam_step: shape mismatch for tensor " + std::to_string(i));
    }
  }
  const double norm = clip_global_norm(grads, config.clip_norm);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  return norm;
}

}  // namespace msgcf::harness
