#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mga/core/params.hpp"

namespace mga::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates sampled per tensor; tensors at or below this size are checked exhaustively.
  std::size_t samples_per_tensor = 100;
  std::uint64_t seed = 1;
  // Denominator floor so exactly-zero gradients compare on an absolute scale;
  // multiplied by max(1, |loss|).
  double abs_floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares backward() against central differences (f(θ+h) - f(θ-h)) / 2h on
// sampled coordinates of each named leaf. `loss` must rebuild the graph from
// the leaves on every call and return a scalar. A loss that does not
// reproduce bit-identically between calls raises PreconditionError.
GradCheckResult finite_difference_check(const std::vector<std::pair<std::string, Var>>& leaves,
                                        const std::function<Var()>& loss, const GradCheckOptions& options = {});

// Checks every unfrozen parameter in the store.
GradCheckResult finite_difference_check(ParameterStore& params, const std::function<Var()>& loss,
                                        const GradCheckOptions& options = {});

}  // namespace mga::nn
