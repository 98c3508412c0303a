#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mga/core/autograd.hpp"

namespace mga::nn {

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;  // zero padding on every side; 0 = valid cross-correlation
};

// Valid (optionally zero-padded) cross-correlation.
// input N×C×H×W (or C×H×W), filters K×C×h×w, bias K.
Var conv2d(const Var& input, const Var& filters, const Var& bias, Conv2dSpec spec = {});

// Max pooling over size×size windows; the first maximum in a window takes the gradient.
Var max_pool2d(const Var& input, std::size_t size = 3, std::size_t stride = 2);

// max(x, 0); derivative at exactly 0 is 0.
Var relu(const Var& input);

enum class BnMode { Train, Infer };

// Running statistics owned by the caller (normally ParameterStore buffers).
// `count` is a one-element tensor holding the number of updates seen.
struct BatchNormStats {
  Tensor* mean = nullptr;
  Tensor* var = nullptr;
  Tensor* count = nullptr;
};

struct BatchNormOptions {
  BnMode mode = BnMode::Train;
  double eps = 1e-5;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
};

// Per-channel normalization. Input is N×F (features are channels) or
// N×C×H×W (statistics over N, H, W). Train mode uses batch statistics and
// updates `stats`; the first update copies the batch statistics. Infer mode
// reads `stats` and throws StateError if none have been accumulated.
Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormStats stats,
               BatchNormOptions options = {});

// N×K×H×W -> N×K (or K×H×W -> K).
Var global_avg_pool(const Var& input);

// input N×in, weight out×in, bias out -> N×out.
Var linear(const Var& input, const Var& weight, const Var& bias);

// Row-wise softmax over the last axis (rank 1 or 2), max-subtracted.
Var softmax(const Var& logits);

// [a | b] along columns: N×p, N×q -> N×(p+q).
Var concat_columns(const Var& a, const Var& b);

// scale * x + offset, elementwise.
Var affine(const Var& input, double scale, double offset);

// Sum of weight_i * term_i over equally shaped terms.
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

// out[i, c] = sum_k gate[i, k] * experts[k][i, c].
Var mixture(const Var& gate, const std::vector<Var>& experts);

// (1/N) sum |pred_i - target_i|; pred is N or N×1. Subgradient at 0 is 0.
Var mean_abs_error(const Var& pred, std::span<const double> targets);

// -(1/N) sum log max(p[i, label_i], clamp) over an N×G probability matrix.
Var cross_entropy(const Var& probs, std::span<const int> labels, double clamp = 1e-12);

}  // namespace mga::nn
