#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mga/core/params.hpp"

namespace mga::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double decay = 0.0;  // inverse-time decay per update step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  // base / (1 + decay * step), evaluated before the step counter advances.
  double effective_learning_rate() const {
    return config_.learning_rate / (1.0 + config_.decay * static_cast<double>(step_));
  }

 private:
  friend void adam_step(ParameterStore&, AdamState&, const std::map<std::string, Tensor>&);

  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, Tensor> first_moment_;
  std::map<std::string, Tensor> second_moment_;
};

// One bias-corrected Adam update. Frozen parameters are skipped and stay
// bit-identical. Unknown names raise StateError, shape mismatches
// DimensionError.
void adam_step(ParameterStore& params, AdamState& state, const std::map<std::string, Tensor>& grads);

// Same, taking gradients accumulated on the store's leaves by backward().
void adam_step(ParameterStore& params, AdamState& state);

}  // namespace mga::nn
