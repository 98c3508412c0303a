#include "mga/core/adam.hpp"

#include <cmath>

#include "mga/errors.hpp"

namespace mga::nn {

void adam_step(ParameterStore& params, AdamState& state, const std::map<std::string, Tensor>& grads) {
  for (const auto& [name, g] : grads) {
    const Var& p = params.get(name);
    if (!p.value().same_shape(g)) {
      throw DimensionError("adam_step: gradient for " + name + " has shape " + shape_string(g.shape()) +
                           " but parameter is " + shape_string(p.shape()));
    }
  }

  const AdamConfig& cfg = state.config_;
  const double lr = state.effective_learning_rate();
  const double t = static_cast<double>(state.step_ + 1);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (const auto& [name, g] : grads) {
    if (params.is_frozen(name)) continue;
    Tensor& value = params.get(name).mutable_value();
    auto [mit, m_new] = state.first_moment_.try_emplace(name, Tensor::zeros_like(value));
    auto [vit, v_new] = state.second_moment_.try_emplace(name, Tensor::zeros_like(value));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  ++state.step_;
}

void adam_step(ParameterStore& params, AdamState& state) {
  std::map<std::string, Tensor> grads;
  for (const auto& [name, var] : params.params()) {
    if (params.is_frozen(name) || !var.has_grad()) continue;
    grads.emplace(name, var.grad());
  }
  adam_step(params, state, grads);
}

}  // namespace mga::nn
