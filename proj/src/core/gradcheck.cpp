#include "mga/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mga/errors.hpp"

namespace mga::nn {

GradCheckResult finite_difference_check(const std::vector<std::pair<std::string, Var>>& leaves,
                                        const std::function<Var()>& loss, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite_difference_check: step must be positive");
  for (const auto& [name, leaf] : leaves) {
    if (!leaf.requires_grad()) throw ContractError("finite_difference_check: leaf " + name + " does not require grad");
    Var(leaf).zero_grad();
  }

  const Var root = loss();
  backward(root);
  const double base = root.value().item();
  if (loss().value().item() != base || loss().value().item() != base) {
    throw PreconditionError("finite_difference_check: loss is not deterministic across evaluations");
  }

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const auto& [_, leaf] : leaves) analytic.push_back(leaf.grad());

  // Gradients carry the loss's units, so the floor scales with it. Without
  // this, roundoff of order eps*|L|/h on an exactly-zero gradient (a conv bias
  // feeding batch norm) reads as a large relative error when L is in years.
  const double floor = options.abs_floor * std::max(1.0, std::abs(base));

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    Var leaf = leaves[t].second;
    Tensor& value = leaf.mutable_value();
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.samples_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.samples_per_tensor);
    }
    for (std::size_t idx : coords) {
      const double saved = value[idx];
      value[idx] = saved + options.step;
      const double plus = loss().value().item();
      value[idx] = saved - options.step;
      const double minus = loss().value().item();
      value[idx] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[t][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_tensor = leaves[t].first;
        result.worst_index = idx;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult finite_difference_check(ParameterStore& params, const std::function<Var()>& loss,
                                        const GradCheckOptions& options) {
  std::vector<std::pair<std::string, Var>> leaves;
  for (const auto& [name, var] : params.params()) {
    if (!params.is_frozen(name)) leaves.emplace_back(name, var);
  }
  return finite_difference_check(leaves, loss, options);
}

}  // namespace mga::nn
