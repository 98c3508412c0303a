#include "mga/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "mga/core/adam.hpp"
#include "mga/core/alloc.hpp"
#include "mga/core/checkpoint.hpp"
#include "mga/errors.hpp"
#include "mga/text.hpp"

namespace mga::pipeline {

using nn::Tensor;
using nn::Var;

namespace {

constexpr const char* kStageBuffer = "meta.stage";

std::vector<int> gender_labels(std::span<const PreparedSample* const> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(s->record.gender);
  return out;
}

std::vector<double> ages(std::span<const PreparedSample* const> batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(s->record.age);
  return out;
}

std::vector<int> coarse_labels(std::span<const PreparedSample* const> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(static_cast<int>(s->coarse));
  return out;
}

std::vector<int> fine_labels(std::span<const PreparedSample* const> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(s->fine);
  return out;
}

Tensor stack_image_list(const std::vector<const data::Image*>& images, const models::ArchConfig& arch) {
  const std::size_t c = arch.can.in_channels;
  const std::size_t h = arch.can.image_size;
  Tensor out({images.size(), c, h, h});
  const std::size_t per = c * h * h;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = *images[i];
    if (img.channels != c || img.height != h || img.width != h) {
      throw DimensionError("image is " + std::to_string(img.channels) + "×" + std::to_string(img.height) + "×" +
                           std::to_string(img.width) + ", the network expects " + std::to_string(c) + "×" +
                           std::to_string(h) + "×" + std::to_string(h));
    }
    std::copy(img.pixels.begin(), img.pixels.end(), out.data() + i * per);
  }
  return out;
}

// Shuffled, size-balanced mini-batches: ceil(n / B) batches whose sizes
// differ by at most one.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t b = std::max<std::size_t>(1, std::min(batch_size, n));
  const std::size_t count = (n + b - 1) / b;
  std::vector<std::vector<std::size_t>> batches(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t lo = k * n / count;
    const std::size_t hi = (k + 1) * n / count;
    batches[k].assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return batches;
}

using BatchLoss = std::function<Var(const std::vector<const PreparedSample*>&, std::mt19937_64&)>;

LossHistory fit(const StagePlan& plan, ParameterStore& store, const std::vector<const PreparedSample*>& data,
                std::uint64_t seed, const BatchLoss& batch_loss) {
  if (data.empty()) throw DataError(plan.name + ": the training slice is empty");
  store.freeze_all_except(plan.trainable);
  nn::AdamState adam(nn::AdamConfig{plan.hyper.learning_rate, plan.hyper.decay});
  std::mt19937_64 rng(seed);
  LossHistory history{plan.name, {}};
  try {
    for (std::size_t epoch = 0; epoch < plan.hyper.epochs; ++epoch) {
      double total = 0.0;
      for (const auto& idx : make_batches(data.size(), plan.hyper.batch_size, rng)) {
        std::vector<const PreparedSample*> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(data[i]);
        Var loss = batch_loss(batch, rng);
        store.zero_grad();
        nn::backward(loss);
        nn::adam_step(store, adam);
        total += loss.value().item() * static_cast<double>(batch.size());
      }
      history.epoch_loss.push_back(total / static_cast<double>(data.size()));
    }
  } catch (...) {
    store.unfreeze_all();
    throw;
  }
  store.unfreeze_all();
  return history;
}

std::vector<const PreparedSample*> select(std::span<const PreparedSample> data, const AgeRange& range) {
  std::vector<const PreparedSample*> out;
  for (const auto& s : data) {
    if (range.contains(s.record.age)) out.push_back(&s);
  }
  return out;
}

Tensor augmented_images(const std::vector<const PreparedSample*>& batch, const models::ArchConfig& arch,
                        const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::vector<const data::Image*> images;
  images.reserve(batch.size());
  if (!cfg.enabled) {
    for (const auto* s : batch) images.push_back(&s->record.image);
    return stack_image_list(images, arch);
  }
  std::vector<SampleRecord> augmented;
  augmented.reserve(batch.size());
  for (const auto* s : batch) augmented.push_back(augment(s->record, rng, cfg));
  for (const auto& r : augmented) images.push_back(&r.image);
  return stack_image_list(images, arch);
}

void set_completed_stage(ParameterStore& store, int stage) {
  if (!store.has_buffer(kStageBuffer)) store.add_buffer(kStageBuffer, Tensor({1}, 0.0));
  store.buffer(kStageBuffer)[0] = stage;
}

std::uint64_t sub_seed(std::uint64_t seed, int stage, std::size_t part) {
  // splitmix64 finalizer over a packed key.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(stage) * 1000003ULL + part;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

// --- groups ------------------------------------------------------------------

const char* to_string(AgeGroup g) {
  switch (g) {
    case AgeGroup::Young:
      return "young";
    case AgeGroup::Adult:
      return "adult";
    case AgeGroup::Elder:
      return "elder";
  }
  return "?";
}

void AgeGroupScheme::validate() const {
  if (!(young_adult > 0.0 && adult_elder > young_adult)) {
    throw ConfigError("groups: boundaries must satisfy 0 < young_adult < adult_elder");
  }
  const double narrowest = std::min(young_adult, adult_elder - young_adult);
  if (!(overlap >= 0.0 && overlap < narrowest / 2.0)) {
    throw ConfigError("groups: overlap must be >= 0 and below half the narrowest group span");
  }
  if (fine_groups < 2 || !(fine_width > 0.0)) throw ConfigError("groups: need >= 2 fine groups of positive width");
}

AgeGroup assign_coarse_group(double age, const AgeGroupScheme& scheme) {
  if (!(age >= 0.0) || !std::isfinite(age)) throw ContractError("age must be finite and >= 0");
  if (age < scheme.young_adult) return AgeGroup::Young;
  if (age < scheme.adult_elder) return AgeGroup::Adult;
  return AgeGroup::Elder;
}

int assign_fine_group(double age, const AgeGroupScheme& scheme) {
  if (!(age >= 0.0) || !std::isfinite(age)) throw ContractError("age must be finite and >= 0");
  const double bucket = std::floor(age / scheme.fine_width);
  return static_cast<int>(std::min(bucket, static_cast<double>(scheme.fine_groups - 1)));
}

AgeRange expert_training_range(Expert expert, const AgeGroupScheme& scheme) {
  const double inf = std::numeric_limits<double>::infinity();
  switch (expert) {
    case Expert::Young:
      return {0.0, scheme.young_adult + scheme.overlap};
    case Expert::Adult:
      return {scheme.young_adult - scheme.overlap, scheme.adult_elder + scheme.overlap};
    case Expert::Elder:
      return {scheme.adult_elder - scheme.overlap, inf};
  }
  return {0.0, inf};
}

// --- augmentation --------------------------------------------------------------

SampleRecord flip_sample(const SampleRecord& sample) {
  SampleRecord out = sample;
  out.image = data::flip_horizontal(sample.image);
  out.landmarks = geometry::mirror(sample.landmarks, static_cast<double>(sample.image.width) / 2.0);
  return out;
}

SampleRecord rotate_sample(const SampleRecord& sample, double radians) {
  if (radians == 0.0) return sample;
  const geometry::Point c{sample.image.width / 2.0, sample.image.height / 2.0};
  SampleRecord out = sample;
  out.image = data::rotate(sample.image, radians, c.x, c.y);
  out.landmarks = geometry::rotate(sample.landmarks, c, radians);
  return out;
}

SampleRecord augment(const SampleRecord& sample, std::mt19937_64& rng, const AugmentConfig& config) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool flip = unit(rng) < config.flip_probability;
  const double deg = (2.0 * unit(rng) - 1.0) * config.max_rotation_deg;
  SampleRecord out = flip ? flip_sample(sample) : sample;
  return rotate_sample(out, deg * std::numbers::pi / 180.0);
}

SampleRecord align_sample(const SampleRecord& sample) {
  const auto a = geometry::align_rotation(sample.landmarks);
  SampleRecord out = sample;
  out.landmarks = a.landmarks;
  if (!sample.image.empty() && a.angle != 0.0) out.image = data::rotate(sample.image, a.angle, a.center.x, a.center.y);
  return out;
}

// --- configuration -------------------------------------------------------------

void TrainingConfig::validate() const {
  for (const Hyper* h : {&can, &dgn, &in, &expert, &mga}) {
    if (h->batch_size == 0 || !(h->learning_rate > 0.0) || !(h->decay >= 0.0)) {
      throw ConfigError("training: batch sizes and learning rates must be positive, decay >= 0");
    }
  }
  stage2.validate();
  stage3.validate();
  stage4.validate();
  groups.validate();
  if (!(augment.flip_probability >= 0.0 && augment.flip_probability <= 1.0) || !(augment.max_rotation_deg >= 0.0)) {
    throw ConfigError("augment: flip probability in [0, 1] and non-negative rotation required");
  }
}

std::vector<StagePlan> stage_plans(int stage, const TrainingConfig& config) {
  std::vector<StagePlan> plans;
  switch (stage) {
    case 1:
      plans.push_back({1, "stage1.can", loss::LossKind::Can, {}, {"can."}, {}, config.can});
      plans.push_back({1, "stage1.dgn", loss::LossKind::Dgn, {}, {"dgn."}, {}, config.dgn});
      break;
    case 2:
      plans.push_back({2, "stage2.in", loss::LossKind::Fusion, config.stage2,
                       {"can.conv", "can.bn", "dgn.fc", "dgn.bn", "in."}, {}, config.in});
      break;
    case 3:
      for (Expert e : models::kExperts) {
        plans.push_back({3, "stage3." + std::string(models::to_string(e)), loss::LossKind::Fusion, config.stage3,
                         {models::expert_prefix(e) + "."}, expert_training_range(e, config.groups), config.expert});
      }
      break;
    case 4:
      plans.push_back({4, "stage4.mga", loss::LossKind::Mga, config.stage4, models::MgaModel::parameter_prefixes(),
                       {}, config.mga});
      break;
    default:
      throw ConfigError("stage must be 1, 2, 3 or 4 (got " + std::to_string(stage) + ")");
  }
  return plans;
}

// --- data preparation ----------------------------------------------------------

std::vector<PreparedSample> prepare(std::span<const SampleRecord> records, const models::ArchConfig& arch,
                                    const TrainingConfig& config) {
  std::vector<PreparedSample> out;
  out.reserve(records.size());
  const std::size_t size = arch.can.image_size;
  const std::size_t channels = arch.can.in_channels;
  for (const auto& rec : records) {
    rec.validate();
    if (rec.image.empty()) throw DataError("record " + rec.id + " has no image");
    PreparedSample s;
    s.record = config.align ? align_sample(rec) : rec;
    auto& img = s.record.image;
    if (img.height != size || img.width != size) {
      const double fx = static_cast<double>(size) / static_cast<double>(img.width);
      const double fy = static_cast<double>(size) / static_cast<double>(img.height);
      std::array<geometry::Point, geometry::kLandmarkCount> pts = s.record.landmarks.points();
      for (auto& p : pts) p = {p.x * fx, p.y * fy};
      s.record.landmarks = geometry::LandmarkSet(pts);
      img = data::resize_bilinear(img, size, size);
    }
    if (img.channels != channels) {
      data::Image conv(channels, size, size);
      if (img.channels == 1) {
        for (std::size_t c = 0; c < channels; ++c) {
          std::copy(img.pixels.begin(), img.pixels.end(), conv.pixels.begin() + static_cast<std::ptrdiff_t>(c * size * size));
        }
      } else if (channels == 1) {
        for (std::size_t i = 0; i < size * size; ++i) {
          double sum = 0.0;
          for (std::size_t c = 0; c < img.channels; ++c) sum += img.pixels[c * size * size + i];
          conv.pixels[i] = sum / static_cast<double>(img.channels);
        }
      } else {
        throw DataError("record " + rec.id + ": cannot convert " + std::to_string(img.channels) + " channels to " +
                        std::to_string(channels));
      }
      img = std::move(conv);
    }
    // The feature is invariant to the flips and rotations augmentation
    // applies, so it is computed once here.
    s.geometry = geometry::build_feature(s.record.landmarks).values;
    if (s.geometry.size() != arch.dgn_input_dim()) {
      throw DimensionError("geometric feature has " + std::to_string(s.geometry.size()) + " values, DGN expects " +
                           std::to_string(arch.dgn_input_dim()));
    }
    s.coarse = assign_coarse_group(rec.age, config.groups);
    s.fine = assign_fine_group(rec.age, config.groups);
    out.push_back(std::move(s));
  }
  return out;
}

Tensor stack_images(std::span<const PreparedSample* const> batch, const models::ArchConfig& arch) {
  std::vector<const data::Image*> images;
  images.reserve(batch.size());
  for (const auto* s : batch) images.push_back(&s->record.image);
  return stack_image_list(images, arch);
}

Tensor stack_geometry(std::span<const PreparedSample* const> batch) {
  if (batch.empty()) throw DataError("empty batch");
  const std::size_t d = batch.front()->geometry.size();
  Tensor out({batch.size(), d});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->geometry.size() != d) throw DimensionError("geometric features differ in length within a batch");
    std::copy(batch[i]->geometry.begin(), batch[i]->geometry.end(), out.data() + i * d);
  }
  return out;
}

// --- trainer -------------------------------------------------------------------

const char* to_string(Network n) {
  switch (n) {
    case Network::Can:
      return "can";
    case Network::Dgn:
      return "dgn";
    case Network::In:
      return "in";
    case Network::Mga:
      return "mga";
  }
  return "?";
}

int completed_stage(const ParameterStore& store) {
  return store.has_buffer(kStageBuffer) ? static_cast<int>(store.buffer(kStageBuffer)[0]) : 0;
}

Trainer::Trainer(models::ArchConfig arch, TrainingConfig config) : arch_(std::move(arch)), config_(std::move(config)) {
  nn::tune_allocator();
  arch_.validate();
  config_.validate();
}

StageResult Trainer::run(int stage, ParameterStore& store, std::span<const PreparedSample> data) const {
  const auto plans = stage_plans(stage, config_);
  if (stage > 1 && completed_stage(store) < stage - 1) {
    throw StateError("stage " + std::to_string(stage) + " needs the stage " + std::to_string(stage - 1) +
                     " weights, which are not present");
  }
  if (data.empty()) throw DataError("stage " + std::to_string(stage) + ": no training data");
  StageResult result{stage, {}};
  switch (stage) {
    case 1:
      store = models::make_full_store(arch_, config_.seed);
      result.histories.push_back(train_can(plans[0], store, data, sub_seed(config_.seed, 1, 0)));
      result.histories.push_back(train_dgn(plans[1], store, data, sub_seed(config_.seed, 1, 1)));
      break;
    case 2:
      result.histories.push_back(train_in(plans[0], store, data, sub_seed(config_.seed, 2, 0)));
      break;
    case 3:
      for (std::size_t k = 0; k < models::kExperts.size(); ++k) {
        const Expert e = models::kExperts[k];
        const std::string prefix = models::expert_prefix(e);
        store.get(prefix + ".weight").mutable_value() = store.get("in.gender.weight").value();
        store.get(prefix + ".bias").mutable_value() = store.get("in.gender.bias").value();
        result.histories.push_back(train_expert(plans[k], e, store, data, sub_seed(config_.seed, 3, k)));
      }
      break;
    case 4:
      result.histories.push_back(train_mga(plans[0], store, data, sub_seed(config_.seed, 4, 0)));
      break;
    default:
      break;
  }
  set_completed_stage(store, stage);
  return result;
}

namespace {
std::vector<const PreparedSample*> pointers(std::span<const PreparedSample> data) {
  std::vector<const PreparedSample*> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(&s);
  return out;
}
}  // namespace

LossHistory Trainer::train_can(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                               std::uint64_t seed) const {
  const models::CanModel can(arch_);
  return fit(plan, store, pointers(data), seed, [&](const auto& batch, std::mt19937_64& rng) {
    const Var images = Var::constant(augmented_images(batch, arch_, config_.augment, rng));
    const auto out = can.forward(store, images, models::Mode::Train);
    const auto age = ages(batch);
    const auto gender = gender_labels(batch);
    loss::LossParts parts;
    parts.age = loss::mae_loss(out.age, age);
    parts.gender = loss::gender_ce(out.gender_probs, std::span<const int>(gender));
    return loss::composite_loss(plan.loss, parts, plan.weights);
  });
}

LossHistory Trainer::train_dgn(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                               std::uint64_t seed) const {
  const models::DgnModel dgn(arch_);
  return fit(plan, store, pointers(data), seed, [&](const auto& batch, std::mt19937_64&) {
    const auto out = dgn.forward(store, Var::constant(stack_geometry(batch)), models::Mode::Train);
    const auto gender = gender_labels(batch);
    const auto fine = fine_labels(batch);
    loss::LossParts parts;
    parts.gender = loss::gender_ce(out.gender_probs, std::span<const int>(gender));
    parts.group = loss::group_ce(out.group_probs, std::span<const int>(fine));
    return loss::composite_loss(plan.loss, parts, plan.weights);
  });
}

LossHistory Trainer::train_in(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                              std::uint64_t seed) const {
  const models::IntegratedModel in(arch_);
  return fit(plan, store, pointers(data), seed, [&](const auto& batch, std::mt19937_64& rng) {
    const Var images = Var::constant(augmented_images(batch, arch_, config_.augment, rng));
    const auto out = in.forward(store, images, Var::constant(stack_geometry(batch)), models::Mode::Train);
    const auto age = ages(batch);
    const auto gender = gender_labels(batch);
    const auto coarse = coarse_labels(batch);
    loss::LossParts parts;
    parts.age = loss::mae_loss(out.age, age);
    parts.gender = loss::gender_ce(out.gender_probs, std::span<const int>(gender));
    parts.group = loss::group_ce(out.group_probs, std::span<const int>(coarse));
    return loss::composite_loss(plan.loss, parts, plan.weights);
  });
}

LossHistory Trainer::train_expert(const StagePlan& plan, Expert expert, ParameterStore& store,
                                  std::span<const PreparedSample> data, std::uint64_t seed) const {
  const auto slice = select(data, plan.ages);
  if (slice.empty()) throw DataError(plan.name + ": no training samples in the expert's age range");
  // Everything below the expert head is frozen and runs in inference mode,
  // so the fused features are computed once, without augmentation.
  const models::IntegratedModel in(arch_);
  const std::size_t dim = arch_.fused_dim();
  Tensor cached({slice.size(), dim});
  {
    const nn::NoGradGuard no_grad;
    const std::size_t chunk = 256;
    for (std::size_t lo = 0; lo < slice.size(); lo += chunk) {
      const std::size_t hi = std::min(slice.size(), lo + chunk);
      std::span<const PreparedSample* const> part(slice.data() + lo, hi - lo);
      const auto out = in.trunk(store, Var::constant(stack_images(part, arch_)), Var::constant(stack_geometry(part)),
                                models::Mode::Infer);
      std::copy(out.features.value().data(), out.features.value().data() + (hi - lo) * dim, cached.data() + lo * dim);
    }
  }
  std::unordered_map<const PreparedSample*, std::size_t> row_of;
  for (std::size_t i = 0; i < slice.size(); ++i) row_of[slice[i]] = i;
  return fit(plan, store, slice, seed, [&](const auto& batch, std::mt19937_64&) {
    Tensor f({batch.size(), dim});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t r = row_of.at(batch[i]);
      std::copy(cached.data() + r * dim, cached.data() + (r + 1) * dim, f.data() + i * dim);
    }
    const Var features = Var::constant(std::move(f));
    const auto age = ages(batch);
    const auto gender = gender_labels(batch);
    const auto coarse = coarse_labels(batch);
    loss::LossParts parts;
    parts.gender =
        loss::gender_ce(models::MgaModel::expert_head(store, expert, features), std::span<const int>(gender));
    parts.age = loss::mae_loss(
        nn::affine(nn::linear(features, store.get("in.age.weight"), store.get("in.age.bias")), arch_.age_scale,
                   arch_.age_offset),
        age);
    parts.group = loss::group_ce(models::softmax_head(store, "in.group", features), std::span<const int>(coarse));
    return loss::composite_loss(plan.loss, parts, plan.weights);
  });
}

LossHistory Trainer::train_mga(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                               std::uint64_t seed) const {
  const models::MgaModel mga(arch_);
  return fit(plan, store, pointers(data), seed, [&](const auto& batch, std::mt19937_64& rng) {
    const Var images = Var::constant(augmented_images(batch, arch_, config_.augment, rng));
    const auto out = mga.forward(store, images, Var::constant(stack_geometry(batch)), models::Mode::Train);
    const auto age = ages(batch);
    const auto gender = gender_labels(batch);
    const auto coarse = coarse_labels(batch);
    loss::LossParts parts;
    parts.gender = loss::gender_ce(out.fused_gender, std::span<const int>(gender));
    parts.age = loss::mae_loss(out.trunk.age, age);
    parts.group = loss::group_ce(out.trunk.group_probs, std::span<const int>(coarse));
    return loss::composite_loss(plan.loss, parts, plan.weights);
  });
}

double Trainer::objective(ParameterStore& store, std::span<const PreparedSample> data, std::size_t batch_size) const {
  if (data.empty()) throw DataError("objective: no samples");
  if (batch_size == 0) throw ContractError("objective: batch size must be positive");
  const models::MgaModel mga(arch_);
  const nn::NoGradGuard no_grad;
  // An untrained store has no running statistics yet; use batch statistics
  // on a copy so the caller's buffers stay untouched.
  const bool fresh = completed_stage(store) == 0;
  ParameterStore scratch = fresh ? store.clone() : ParameterStore{};
  ParameterStore& s = fresh ? scratch : store;
  const models::Mode mode = fresh ? models::Mode::Train : models::Mode::Infer;
  const auto all = pointers(data);
  double total = 0.0;
  for (std::size_t lo = 0; lo < all.size(); lo += batch_size) {
    const std::size_t hi = std::min(all.size(), lo + batch_size);
    std::span<const PreparedSample* const> batch(all.data() + lo, hi - lo);
    const auto out =
        mga.forward(s, Var::constant(stack_images(batch, arch_)), Var::constant(stack_geometry(batch)), mode);
    const auto age = ages(batch);
    const auto gender = gender_labels(batch);
    const auto coarse = coarse_labels(batch);
    loss::LossParts parts;
    parts.gender = loss::gender_ce(out.fused_gender, std::span<const int>(gender));
    parts.age = loss::mae_loss(out.trunk.age, age);
    parts.group = loss::group_ce(out.trunk.group_probs, std::span<const int>(coarse));
    const double v = loss::composite_loss(loss::LossKind::Mga, parts, config_.stage4).value()[0];
    total += v * static_cast<double>(hi - lo);
  }
  return total / static_cast<double>(all.size());
}

// --- files ---------------------------------------------------------------------

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int stage) {
  return dir / ("stage" + std::to_string(stage) + ".ckpt");
}

std::filesystem::path expert_checkpoint_path(const std::filesystem::path& dir, Expert expert) {
  return dir / ("stage3." + std::string(models::to_string(expert)) + ".ckpt");
}

void write_loss_log(const std::filesystem::path& path, const StageResult& result) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write loss log: " + path.string());
  out << "run,epoch,loss\n";
  for (const auto& h : result.histories) {
    for (std::size_t e = 0; e < h.epoch_loss.size(); ++e) {
      out << h.name << ',' << e + 1 << ',' << text::format_double(h.epoch_loss[e]) << '\n';
    }
  }
}

StageResult run_stage_files(const Trainer& trainer, int stage, const std::filesystem::path& dir,
                            std::span<const PreparedSample> data) {
  stage_plans(stage, trainer.config());
  ParameterStore store;
  if (stage > 1) {
    const auto prev = checkpoint_path(dir, stage - 1);
    if (!std::filesystem::exists(prev)) {
      throw StateError("stage " + std::to_string(stage) + " needs " + prev.string() + "; run stage " +
                       std::to_string(stage - 1) + " first");
    }
    store = nn::load_checkpoint(prev);
  }
  StageResult result = trainer.run(stage, store, data);
  std::filesystem::create_directories(dir);
  if (stage == 3) {
    for (Expert e : models::kExperts) {
      ParameterStore one;
      one.copy_from(store, {models::expert_prefix(e) + "."});
      nn::save_checkpoint(expert_checkpoint_path(dir, e), one);
    }
  }
  nn::save_checkpoint(checkpoint_path(dir, stage), store);
  write_loss_log(dir / ("stage" + std::to_string(stage) + ".loss.csv"), result);
  return result;
}

// --- inference -----------------------------------------------------------------

std::vector<models::Prediction> predict(Network network, ParameterStore& store, const models::ArchConfig& arch,
                                        std::span<const PreparedSample> data, std::size_t batch_size) {
  if (network == Network::Mga && completed_stage(store) < 3) {
    throw StateError("MGA inference needs trained expert heads (stage 3 or later)");
  }
  if (network == Network::In && completed_stage(store) < 2) {
    throw StateError("IN inference needs stage 2 weights");
  }
  const bool with_experts = network == Network::In && completed_stage(store) >= 3;
  const nn::NoGradGuard no_grad;
  const auto all = pointers(data);
  std::vector<models::Prediction> preds;
  preds.reserve(data.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t lo = 0; lo < all.size(); lo += batch_size) {
    const std::size_t hi = std::min(all.size(), lo + batch_size);
    std::span<const PreparedSample* const> part(all.data() + lo, hi - lo);
    std::vector<models::Prediction> chunk;
    switch (network) {
      case Network::Can:
        chunk = models::to_predictions(
            models::CanModel(arch).forward(store, Var::constant(stack_images(part, arch)), models::Mode::Infer));
        break;
      case Network::Dgn:
        chunk = models::to_predictions(
            models::DgnModel(arch).forward(store, Var::constant(stack_geometry(part)), models::Mode::Infer));
        break;
      case Network::In: {
        const auto out = models::IntegratedModel(arch).forward(store, Var::constant(stack_images(part, arch)),
                                                               Var::constant(stack_geometry(part)),
                                                               models::Mode::Infer);
        chunk = models::to_predictions(out);
        if (with_experts) {
          for (Expert e : models::kExperts) {
            const Tensor probs = models::MgaModel::expert_head(store, e, out.features).value();
            for (std::size_t i = 0; i < chunk.size(); ++i) chunk[i].experts.push_back({probs[2 * i], probs[2 * i + 1]});
          }
        }
        break;
      }
      case Network::Mga:
        chunk = models::to_predictions(models::MgaModel(arch).forward(
            store, Var::constant(stack_images(part, arch)), Var::constant(stack_geometry(part)), models::Mode::Infer));
        break;
    }
    preds.insert(preds.end(), chunk.begin(), chunk.end());
  }
  return preds;
}

}  // namespace mga::pipeline
