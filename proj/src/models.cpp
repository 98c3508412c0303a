#include "mga/models.hpp"

#include <cmath>

#include "mga/core/init.hpp"
#include "mga/errors.hpp"
#include "mga/geometry.hpp"

namespace mga::models {
namespace {

void add_dense(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
               std::mt19937_64& rng) {
  store.add(prefix + ".weight", nn::he_uniform({out, in}, in, rng));
  store.add(prefix + ".bias", Tensor({out}, 0.0));
}

void add_batch_norm(ParameterStore& store, const std::string& prefix, std::size_t channels) {
  store.add(prefix + ".gamma", Tensor({channels}, 1.0));
  store.add(prefix + ".beta", Tensor({channels}, 0.0));
  store.add_batch_norm_buffers(prefix, channels);
}

Var bn(ParameterStore& store, const ArchConfig& cfg, const std::string& prefix, const Var& x, Mode mode) {
  nn::BatchNormOptions opts;
  opts.mode = mode == Mode::Train ? nn::BnMode::Train : nn::BnMode::Infer;
  opts.eps = cfg.bn_eps;
  opts.momentum = cfg.bn_momentum;
  return nn::batch_norm(x, store.get(prefix + ".gamma"), store.get(prefix + ".beta"),
                        store.batch_norm_stats(prefix), opts);
}

Var dense(ParameterStore& store, const std::string& prefix, const Var& x) {
  return nn::linear(x, store.get(prefix + ".weight"), store.get(prefix + ".bias"));
}

Var age_head(ParameterStore& store, const ArchConfig& cfg, const std::string& prefix, const Var& x) {
  return nn::affine(dense(store, prefix, x), cfg.age_scale, cfg.age_offset);
}

std::vector<double> row(const Tensor& t, std::size_t i) {
  const std::size_t cols = t.dim(1);
  return {t.data() + i * cols, t.data() + (i + 1) * cols};
}

std::array<double, 2> pair_row(const Tensor& t, std::size_t i) { return {t[i * 2], t[i * 2 + 1]}; }

}  // namespace

std::size_t CanConfig::filters(std::size_t block) const {
  const double scaled = std::round(static_cast<double>(blocks.at(block).filters) * width_multiplier);
  return std::max<std::size_t>(1, static_cast<std::size_t>(scaled));
}

ArchConfig ArchConfig::reference() { return ArchConfig{}; }

ArchConfig ArchConfig::desk() {
  ArchConfig cfg;
  cfg.can.image_size = 64;
  cfg.can.width_multiplier = 1.0 / 6.0;
  cfg.can.blocks = {{{96, 5, 2, 2}, {256, 3, 1, 1}, {384, 3, 1, 1}}};
  return cfg;
}

std::size_t ArchConfig::dgn_input_dim() const {
  return dgn.input_dim == 0 ? geometry::default_feature_length() : dgn.input_dim;
}

void ArchConfig::validate() const {
  if (can.in_channels == 0) throw ConfigError("architecture: in_channels must be positive");
  if (!(can.width_multiplier > 0.0)) throw ConfigError("architecture: width_multiplier must be positive");
  for (const auto& b : can.blocks) {
    if (b.filters == 0 || b.kernel == 0 || b.stride == 0) {
      throw ConfigError("architecture: conv blocks need positive filters, kernel and stride");
    }
  }
  if (dgn.hidden[0] == 0 || dgn.hidden[1] == 0) throw ConfigError("architecture: DGN hidden widths must be positive");
  if (dgn.fine_groups < 2 || coarse_groups < 2) throw ConfigError("architecture: group heads need >= 2 classes");
  if (coarse_groups != 3) throw ConfigError("architecture: the expert layout requires exactly 3 coarse groups");
  if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum < 1.0)) {
    throw ConfigError("architecture: bn_eps must be > 0 and bn_momentum in [0, 1)");
  }
  if (!(age_scale > 0.0)) throw ConfigError("architecture: age_scale must be positive");
  can_shape_trace(can);
}

std::vector<std::pair<std::string, Shape>> can_shape_trace(const CanConfig& config) {
  std::vector<std::pair<std::string, Shape>> trace;
  std::size_t c = config.in_channels, h = config.image_size, w = config.image_size;
  trace.emplace_back("input", Shape{c, h, w});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& b = config.blocks[i];
    const std::string tag = std::to_string(i + 1);
    if (b.kernel > h + 2 * b.padding || b.kernel > w + 2 * b.padding) {
      throw DimensionError("CAN input " + std::to_string(config.image_size) + "x" +
                           std::to_string(config.image_size) + " too small: conv" + tag + " kernel " +
                           std::to_string(b.kernel) + " exceeds " + std::to_string(h) + "x" + std::to_string(w));
    }
    h = (h + 2 * b.padding - b.kernel) / b.stride + 1;
    w = (w + 2 * b.padding - b.kernel) / b.stride + 1;
    c = config.filters(i);
    trace.emplace_back("conv" + tag, Shape{c, h, w});
    if (config.pool_size > h || config.pool_size > w) {
      throw DimensionError("CAN input " + std::to_string(config.image_size) + "x" +
                           std::to_string(config.image_size) + " too small: pool" + tag + " window exceeds " +
                           std::to_string(h) + "x" + std::to_string(w));
    }
    h = (h - config.pool_size) / config.pool_stride + 1;
    w = (w - config.pool_size) / config.pool_stride + 1;
    trace.emplace_back("pool" + tag, Shape{c, h, w});
  }
  trace.emplace_back("gap", Shape{c});
  return trace;
}

const char* to_string(Expert e) {
  switch (e) {
    case Expert::Young:
      return "young";
    case Expert::Adult:
      return "adult";
    case Expert::Elder:
      return "elder";
  }
  return "?";
}

std::string expert_prefix(Expert e) { return std::string("expert.") + to_string(e); }

Var softmax_head(ParameterStore& store, const std::string& prefix, const Var& input) {
  return nn::softmax(dense(store, prefix, input));
}

// --- CAN -------------------------------------------------------------------

void CanModel::init(ParameterStore& store, std::mt19937_64& rng) const {
  const auto& can = config_.can;
  std::size_t in = can.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string tag = std::to_string(i + 1);
    const std::size_t k = can.blocks[i].kernel;
    const std::size_t out = can.filters(i);
    store.add("can.conv" + tag + ".weight", nn::he_uniform({out, in, k, k}, in * k * k, rng));
    store.add("can.conv" + tag + ".bias", Tensor({out}, 0.0));
    add_batch_norm(store, "can.bn" + tag, out);
    in = out;
  }
  add_dense(store, "can.gender", in, 2, rng);
  add_dense(store, "can.age", in, 1, rng);
}

CanOutputs CanModel::trunk(ParameterStore& store, const Var& images, Mode mode) const {
  const auto& can = config_.can;
  const Tensor& x = images.value();
  if (x.rank() != 4 || x.dim(1) != can.in_channels || x.dim(2) != can.image_size || x.dim(3) != can.image_size) {
    throw DimensionError("CAN expects N×" + std::to_string(can.in_channels) + "×" + std::to_string(can.image_size) +
                         "×" + std::to_string(can.image_size) + " images, got " + nn::shape_string(x.shape()));
  }
  Var h = images;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string tag = std::to_string(i + 1);
    const auto& b = can.blocks[i];
    h = nn::conv2d(h, store.get("can.conv" + tag + ".weight"), store.get("can.conv" + tag + ".bias"),
                   {b.stride, b.padding});
    h = bn(store, config_, "can.bn" + tag, h, mode);
    h = nn::relu(h);
    h = nn::max_pool2d(h, can.pool_size, can.pool_stride);
  }
  CanOutputs out;
  out.maps = h;
  out.features = nn::global_avg_pool(h);
  return out;
}

CanOutputs CanModel::forward(ParameterStore& store, const Var& images, Mode mode) const {
  CanOutputs out = trunk(store, images, mode);
  out.gender_probs = softmax_head(store, "can.gender", out.features);
  out.age = age_head(store, config_, "can.age", out.features);
  return out;
}

// --- DGN -------------------------------------------------------------------

void DgnModel::init(ParameterStore& store, std::mt19937_64& rng) const {
  const std::size_t in = config_.dgn_input_dim();
  const auto& hidden = config_.dgn.hidden;
  add_dense(store, "dgn.fc1", in, hidden[0], rng);
  add_batch_norm(store, "dgn.bn1", hidden[0]);
  add_dense(store, "dgn.fc2", hidden[0], hidden[1], rng);
  add_batch_norm(store, "dgn.bn2", hidden[1]);
  add_dense(store, "dgn.gender", hidden[1], 2, rng);
  add_dense(store, "dgn.group", hidden[1], config_.dgn.fine_groups, rng);
}

Var DgnModel::trunk(ParameterStore& store, const Var& features, Mode mode) const {
  const Tensor& x = features.value();
  if (x.rank() != 2 || x.dim(1) != config_.dgn_input_dim()) {
    throw DimensionError("DGN expects N×" + std::to_string(config_.dgn_input_dim()) + " features, got " +
                         nn::shape_string(x.shape()));
  }
  Var h = nn::relu(bn(store, config_, "dgn.bn1", dense(store, "dgn.fc1", features), mode));
  return nn::relu(bn(store, config_, "dgn.bn2", dense(store, "dgn.fc2", h), mode));
}

DgnOutputs DgnModel::forward(ParameterStore& store, const Var& features, Mode mode) const {
  DgnOutputs out;
  out.hidden2 = trunk(store, features, mode);
  out.gender_probs = softmax_head(store, "dgn.gender", out.hidden2);
  out.group_probs = softmax_head(store, "dgn.group", out.hidden2);
  return out;
}

// --- IN --------------------------------------------------------------------

void IntegratedModel::init_heads(ParameterStore& store, std::mt19937_64& rng) const {
  const std::size_t f = config_.fused_dim();
  add_dense(store, "in.gender", f, 2, rng);
  add_dense(store, "in.age", f, 1, rng);
  add_dense(store, "in.group", f, config_.coarse_groups, rng);
}

InOutputs IntegratedModel::trunk(ParameterStore& store, const Var& images, const Var& features, Mode mode) const {
  if (images.value().rank() == 4 && features.value().rank() == 2 &&
      images.value().dim(0) != features.value().dim(0)) {
    throw DimensionError("integrated network: image and feature batches differ in size");
  }
  const CanOutputs can = can_.trunk(store, images, mode);
  const Var geo = dgn_.trunk(store, features, mode);
  InOutputs out;
  out.can_maps = can.maps;
  out.features = nn::concat_columns(geo, can.features);
  return out;
}

InOutputs IntegratedModel::forward(ParameterStore& store, const Var& images, const Var& features, Mode mode) const {
  InOutputs out = trunk(store, images, features, mode);
  out.gender_probs = softmax_head(store, "in.gender", out.features);
  out.age = age_head(store, config_, "in.age", out.features);
  out.group_probs = softmax_head(store, "in.group", out.features);
  return out;
}

// --- MGA -------------------------------------------------------------------

void MgaModel::init_experts(ParameterStore& store, std::mt19937_64& rng) const {
  const std::size_t f = config_.fused_dim();
  for (Expert e : kExperts) {
    const std::string prefix = expert_prefix(e);
    if (store.contains("in.gender.weight")) {
      store.add(prefix + ".weight", store.get("in.gender.weight").value());
      store.add(prefix + ".bias", store.get("in.gender.bias").value());
    } else {
      add_dense(store, prefix, f, 2, rng);
    }
  }
}

Var MgaModel::expert_head(ParameterStore& store, Expert expert, const Var& fused_features) {
  return softmax_head(store, expert_prefix(expert), fused_features);
}

MgaOutputs MgaModel::forward(ParameterStore& store, const Var& images, const Var& features, Mode mode) const {
  MgaOutputs out;
  out.trunk = in_.trunk(store, images, features, mode);
  out.trunk.age = age_head(store, config_, "in.age", out.trunk.features);
  out.trunk.group_probs = softmax_head(store, "in.group", out.trunk.features);
  std::vector<Var> experts;
  for (Expert e : kExperts) {
    out.expert_probs[static_cast<std::size_t>(e)] = expert_head(store, e, out.trunk.features);
    experts.push_back(out.expert_probs[static_cast<std::size_t>(e)]);
  }
  out.fused_gender = nn::mixture(out.trunk.group_probs, experts);
  return out;
}

std::vector<std::string> MgaModel::parameter_prefixes() {
  return {"can.conv", "can.bn", "dgn.fc", "dgn.bn", "in.age", "in.group", "expert."};
}

ParameterStore make_full_store(const ArchConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParameterStore store;
  CanModel(config).init(store, rng);
  DgnModel(config).init(store, rng);
  IntegratedModel(config).init_heads(store, rng);
  MgaModel(config).init_experts(store, rng);
  return store;
}

std::size_t mga_parameter_count(const ArchConfig& config) {
  return make_full_store(config, 0).parameter_count(MgaModel::parameter_prefixes());
}

// --- predictions -------------------------------------------------------------

std::array<double, 2> fuse_experts(std::span<const double> gate, std::span<const std::array<double, 2>> experts) {
  constexpr double kTol = 1e-6;
  if (gate.size() != experts.size() || gate.empty()) {
    throw ContractError("fuse_experts: gate has " + std::to_string(gate.size()) + " entries for " +
                        std::to_string(experts.size()) + " experts");
  }
  double gate_sum = 0.0;
  for (double g : gate) {
    if (!(g >= 0.0)) throw ContractError("fuse_experts: gate probabilities must be non-negative");
    gate_sum += g;
  }
  if (std::abs(gate_sum - 1.0) > kTol) throw ContractError("fuse_experts: gate probabilities do not sum to 1");
  for (const auto& e : experts) {
    if (!(e[0] >= 0.0) || !(e[1] >= 0.0) || std::abs(e[0] + e[1] - 1.0) > kTol) {
      throw ContractError("fuse_experts: expert output is not a probability pair");
    }
  }
  std::array<double, 2> fused{0.0, 0.0};
  for (std::size_t k = 0; k < gate.size(); ++k) {
    fused[0] += gate[k] * experts[k][0];
    fused[1] += gate[k] * experts[k][1];
  }
  return fused;
}

std::vector<Prediction> to_predictions(const CanOutputs& out) {
  const Tensor& g = out.gender_probs.value();
  std::vector<Prediction> preds(g.dim(0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].gender = pair_row(g, i);
    preds[i].age = out.age.value()[i];
  }
  return preds;
}

std::vector<Prediction> to_predictions(const DgnOutputs& out) {
  const Tensor& g = out.gender_probs.value();
  std::vector<Prediction> preds(g.dim(0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].gender = pair_row(g, i);
    preds[i].fine_group = row(out.group_probs.value(), i);
  }
  return preds;
}

std::vector<Prediction> to_predictions(const InOutputs& out) {
  const Tensor& g = out.gender_probs.value();
  std::vector<Prediction> preds(g.dim(0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].gender = pair_row(g, i);
    preds[i].age = out.age.value()[i];
    preds[i].group = row(out.group_probs.value(), i);
  }
  return preds;
}

std::vector<Prediction> to_predictions(const MgaOutputs& out) {
  const Tensor& g = out.fused_gender.value();
  std::vector<Prediction> preds(g.dim(0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].gender = pair_row(g, i);
    preds[i].age = out.trunk.age.value()[i];
    preds[i].group = row(out.trunk.group_probs.value(), i);
    for (const auto& e : out.expert_probs) preds[i].experts.push_back(pair_row(e.value(), i));
  }
  return preds;
}

}  // namespace mga::models
