#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mga/core/ops.hpp"
#include "mga/core/params.hpp"

namespace mga::models {

using nn::ParameterStore;
using nn::Shape;
using nn::Tensor;
using nn::Var;

struct ConvBlockSpec {
  std::size_t filters = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct CanConfig {
  std::size_t in_channels = 3;
  std::size_t image_size = 227;
  std::array<ConvBlockSpec, 3> blocks{{{96, 7, 4, 0}, {256, 5, 1, 0}, {384, 3, 1, 0}}};
  double width_multiplier = 1.0;
  std::size_t pool_size = 3;
  std::size_t pool_stride = 2;

  // Filter count of block i after the width multiplier (at least 1).
  std::size_t filters(std::size_t block) const;
};

struct DgnConfig {
  std::size_t input_dim = 0;  // 0 = length of the default half-face feature
  std::array<std::size_t, 2> hidden{64, 64};
  std::size_t fine_groups = 8;
};

struct ArchConfig {
  CanConfig can;
  DgnConfig dgn;
  std::size_t coarse_groups = 3;
  // Age head output is age_offset + age_scale * (w·f + b), in years.
  double age_offset = 40.0;
  double age_scale = 5.0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  // 227×227 input, 96/256/384 filters, 7×7/4, 5×5/1, 3×3/1 valid convolutions.
  static ArchConfig reference();
  // 64×64 input, width 1/6, 5×5/2 pad 2, 3×3/1 pad 1, 3×3/1 pad 1.
  static ArchConfig desk();

  std::size_t dgn_input_dim() const;
  std::size_t can_feature_dim() const { return can.filters(2); }
  std::size_t dgn_feature_dim() const { return dgn.hidden[1]; }
  std::size_t fused_dim() const { return can_feature_dim() + dgn_feature_dim(); }

  // Throws ConfigError on inconsistent values, DimensionError when the image
  // does not survive the three conv/pool stages.
  void validate() const;
};

// Layer-by-layer output shapes of the CAN trunk for one image.
std::vector<std::pair<std::string, Shape>> can_shape_trace(const CanConfig& config);

enum class Mode { Train, Infer };

enum class Expert { Young = 0, Adult = 1, Elder = 2 };
inline constexpr std::array<Expert, 3> kExperts{Expert::Young, Expert::Adult, Expert::Elder};
const char* to_string(Expert e);
std::string expert_prefix(Expert e);  // "expert.young", ...

struct CanOutputs {
  Var maps;      // N×K×h×w, the maps GAP averages
  Var features;  // N×K
  Var gender_probs;
  Var age;  // N×1, years
};

struct DgnOutputs {
  Var hidden2;  // N×N_D
  Var gender_probs;
  Var group_probs;  // N×fine_groups
};

struct InOutputs {
  Var can_maps;
  Var features;  // N×(N_D + N_C), DGN part first
  Var gender_probs;
  Var age;
  Var group_probs;  // N×coarse_groups
};

struct MgaOutputs {
  InOutputs trunk;  // trunk.gender_probs is not computed (null)
  std::array<Var, 3> expert_probs;
  Var fused_gender;
};

// Convolutional appearance network: three conv→BN→ReLU→maxpool blocks, GAP,
// gender (softmax) and age (linear) heads. Parameters under "can.".
class CanModel {
 public:
  explicit CanModel(ArchConfig config) : config_(std::move(config)) {}
  void init(ParameterStore& store, std::mt19937_64& rng) const;
  // Trunk only: maps and GAP features.
  CanOutputs trunk(ParameterStore& store, const Var& images, Mode mode) const;
  CanOutputs forward(ParameterStore& store, const Var& images, Mode mode) const;
  static std::vector<std::string> trunk_prefixes() { return {"can.conv", "can.bn"}; }
  static std::vector<std::string> head_prefixes() { return {"can.gender", "can.age"}; }
  const ArchConfig& config() const { return config_; }

 private:
  ArchConfig config_;
};

// Deep geometry network: two dense→BN→ReLU hidden layers, gender and fine
// age-group softmax heads. Parameters under "dgn.".
class DgnModel {
 public:
  explicit DgnModel(ArchConfig config) : config_(std::move(config)) {}
  void init(ParameterStore& store, std::mt19937_64& rng) const;
  Var trunk(ParameterStore& store, const Var& features, Mode mode) const;
  DgnOutputs forward(ParameterStore& store, const Var& features, Mode mode) const;
  static std::vector<std::string> trunk_prefixes() { return {"dgn.fc", "dgn.bn"}; }
  static std::vector<std::string> head_prefixes() { return {"dgn.gender", "dgn.group"}; }
  const ArchConfig& config() const { return config_; }

 private:
  ArchConfig config_;
};

// CAN and DGN trunks joined on f = {f2_D, f_C}; gender, age and coarse
// age-group heads under "in.".
class IntegratedModel {
 public:
  explicit IntegratedModel(ArchConfig config) : config_(config), can_(config), dgn_(config) {}
  // Initializes only the "in." heads; trunks come from stage-1 weights.
  void init_heads(ParameterStore& store, std::mt19937_64& rng) const;
  // Trunks plus fused features, no heads.
  InOutputs trunk(ParameterStore& store, const Var& images, const Var& features, Mode mode) const;
  InOutputs forward(ParameterStore& store, const Var& images, const Var& features, Mode mode) const;
  static std::vector<std::string> head_prefixes() { return {"in.gender", "in.age", "in.group"}; }
  const ArchConfig& config() const { return config_; }

 private:
  ArchConfig config_;
  CanModel can_;
  DgnModel dgn_;
};

// Integrated trunk with three age-group expert gender heads fused by the
// coarse age-group probabilities.
class MgaModel {
 public:
  explicit MgaModel(ArchConfig config) : config_(config), in_(config) {}
  // Each expert head starts as a copy of "in.gender" when present, random otherwise.
  void init_experts(ParameterStore& store, std::mt19937_64& rng) const;
  MgaOutputs forward(ParameterStore& store, const Var& images, const Var& features, Mode mode) const;
  // Expert head over precomputed fused features f (N×(N_D+N_C)).
  static Var expert_head(ParameterStore& store, Expert expert, const Var& fused_features);
  // Every parameter the deployed MGA uses.
  static std::vector<std::string> parameter_prefixes();
  const ArchConfig& config() const { return config_; }

 private:
  ArchConfig config_;
  IntegratedModel in_;
};

// Softmax dense head: softmax(x Wᵀ + b) with parameters prefix.weight / prefix.bias.
Var softmax_head(ParameterStore& store, const std::string& prefix, const Var& input);

// Creates all parameters of the full system (CAN, DGN, IN heads, experts).
ParameterStore make_full_store(const ArchConfig& config, std::uint64_t seed);

// Parameter count of the deployed MGA for `config`.
std::size_t mga_parameter_count(const ArchConfig& config);

// ---------------------------------------------------------------------------

struct Prediction {
  std::array<double, 2> gender{0.5, 0.5};
  std::optional<double> age;                       // years
  std::vector<double> group;                       // coarse group probabilities, may be empty
  std::vector<std::array<double, 2>> experts;      // per-expert gender, may be empty
  std::vector<double> fine_group;                  // fine group probabilities, may be empty

  int gender_label() const { return gender[1] > gender[0] ? 1 : 0; }
};

// Convex combination F_c = sum_k gate_k * experts[k][c]. Inputs must each sum
// to 1 (within 1e-6) with non-negative entries, otherwise ContractError.
std::array<double, 2> fuse_experts(std::span<const double> gate, std::span<const std::array<double, 2>> experts);

std::vector<Prediction> to_predictions(const CanOutputs& out);
std::vector<Prediction> to_predictions(const DgnOutputs& out);
std::vector<Prediction> to_predictions(const InOutputs& out);
std::vector<Prediction> to_predictions(const MgaOutputs& out);

}  // namespace mga::models
