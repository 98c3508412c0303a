#include "mga/losses.hpp"

#include "mga/core/ops.hpp"
#include "mga/errors.hpp"

namespace mga::loss {

void LossWeights::validate() const {
  if (!(alpha1 >= 0.0 && beta1 >= 0.0 && lambda1 >= 0.0 && lambda2 >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

Var mae_loss(const Var& pred_ages, std::span<const double> true_ages) {
  return nn::mean_abs_error(pred_ages, true_ages);
}

std::vector<int> labels_from_one_hot(std::span<const double> one_hot, std::size_t classes) {
  if (classes == 0 || one_hot.size() % classes != 0) {
    throw ContractError("one-hot labels: " + std::to_string(one_hot.size()) + " values is not a multiple of " +
                        std::to_string(classes));
  }
  std::vector<int> labels(one_hot.size() / classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int hot = -1;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = one_hot[i * classes + c];
      if (v == 1.0) {
        if (hot >= 0) throw ContractError("one-hot labels: row " + std::to_string(i) + " has several ones");
        hot = static_cast<int>(c);
      } else if (v != 0.0) {
        throw ContractError("one-hot labels: row " + std::to_string(i) + " has a value other than 0 or 1");
      }
    }
    if (hot < 0) throw ContractError("one-hot labels: row " + std::to_string(i) + " has no one");
    labels[i] = hot;
  }
  return labels;
}

Var gender_ce(const Var& probs, std::span<const int> labels) {
  if (probs.value().rank() != 2 || probs.value().dim(1) != 2) {
    throw DimensionError("gender_ce: probabilities must be N×2");
  }
  return nn::cross_entropy(probs, labels, kProbabilityClamp);
}

Var gender_ce(const Var& probs, std::span<const double> one_hot) {
  const auto labels = labels_from_one_hot(one_hot, 2);
  return gender_ce(probs, labels);
}

Var group_ce(const Var& probs, std::span<const int> labels) {
  return nn::cross_entropy(probs, labels, kProbabilityClamp);
}

Var group_ce(const Var& probs, std::span<const double> one_hot) {
  if (probs.value().rank() != 2) throw DimensionError("group_ce: probabilities must be N×G");
  const auto labels = labels_from_one_hot(one_hot, probs.value().dim(1));
  return group_ce(probs, labels);
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Can:
      return "CAN";
    case LossKind::Dgn:
      return "DGN";
    case LossKind::Fusion:
      return "FUSION";
    case LossKind::Mga:
      return "MGA";
  }
  return "?";
}

Var composite_loss(LossKind kind, const LossParts& parts, const LossWeights& weights) {
  weights.validate();
  auto need = [kind](const std::optional<Var>& part, const char* what) -> const Var& {
    if (!part || !*part) {
      throw ContractError(std::string("composite_loss(") + to_string(kind) + "): missing " + what + " component");
    }
    return *part;
  };
  switch (kind) {
    case LossKind::Can:
      return nn::weighted_sum({{1.0, need(parts.age, "age")}, {1.0, need(parts.gender, "gender")}});
    case LossKind::Dgn:
      return nn::weighted_sum({{1.0, need(parts.group, "age-group")}, {1.0, need(parts.gender, "gender")}});
    case LossKind::Fusion:
      return nn::weighted_sum({{1.0, need(parts.gender, "gender")},
                               {weights.alpha1, need(parts.age, "age")},
                               {weights.beta1, need(parts.group, "age-group")}});
    case LossKind::Mga:
      return nn::weighted_sum({{1.0, need(parts.gender, "fused gender")},
                               {weights.lambda1, need(parts.age, "age")},
                               {weights.lambda2, need(parts.group, "age-group")}});
  }
  throw ContractError("composite_loss: unknown loss kind");
}

}  // namespace mga::loss
