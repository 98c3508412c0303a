#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mga/core/autograd.hpp"

namespace mga::loss {

using nn::Var;

inline constexpr double kProbabilityClamp = 1e-12;

struct LossWeights {
  double alpha1 = 1.0;   // age term of the fusion loss
  double beta1 = 1.0;    // age-group term of the fusion loss
  double lambda1 = 0.1;  // age term of the MGA loss
  double lambda2 = 0.1;  // age-group term of the MGA loss

  void validate() const;
};

// (1/N) sum |pred - truth|. Throws ContractError on an empty batch.
Var mae_loss(const Var& pred_ages, std::span<const double> true_ages);

// Cross entropy of an N×2 probability matrix against one-hot rows (N×2,
// row-major). Rows must be exact one-hot vectors.
Var gender_ce(const Var& probs, std::span<const double> one_hot);
// Same against class indices.
Var gender_ce(const Var& probs, std::span<const int> labels);

// N×G generalization used for the fine (G = 8) and coarse (G = 3) group heads.
Var group_ce(const Var& probs, std::span<const double> one_hot);
Var group_ce(const Var& probs, std::span<const int> labels);

// Class indices from row-major one-hot rows; ContractError if malformed.
std::vector<int> labels_from_one_hot(std::span<const double> one_hot, std::size_t classes);

enum class LossKind { Can, Dgn, Fusion, Mga };
const char* to_string(LossKind kind);

// Component losses already reduced to scalars. For Mga, `gender` is the
// cross entropy taken on the fused probabilities.
struct LossParts {
  std::optional<Var> age;
  std::optional<Var> gender;
  std::optional<Var> group;
};

// CAN:    L_a + L_g
// DGN:    L_ag + L_g
// Fusion: L_g + alpha1 L_a + beta1 L_ag
// MGA:    L_g(fused) + lambda1 L_a + lambda2 L_ag
Var composite_loss(LossKind kind, const LossParts& parts, const LossWeights& weights);

}  // namespace mga::loss
