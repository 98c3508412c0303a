#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mga/core/params.hpp"
#include "mga/data.hpp"
#include "mga/losses.hpp"
#include "mga/models.hpp"

namespace mga::pipeline {

using data::SampleRecord;
using models::Expert;
using nn::ParameterStore;

enum class AgeGroup { Young = 0, Adult = 1, Elder = 2 };
const char* to_string(AgeGroup g);

struct AgeGroupScheme {
  double young_adult = 20.0;  // first adult year
  double adult_elder = 50.0;  // first elder year
  double overlap = 5.0;       // Δ, years added past each interior boundary
  std::size_t fine_groups = 8;
  double fine_width = 10.0;

  void validate() const;  // ConfigError
};

// Half-open: Young [0, 20), Adult [20, 50), Elder [50, ∞). ContractError on a
// negative or non-finite age.
AgeGroup assign_coarse_group(double age, const AgeGroupScheme& scheme = {});
// Decade buckets, clamped to the last group.
int assign_fine_group(double age, const AgeGroupScheme& scheme = {});

struct AgeRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();  // exclusive
  bool contains(double age) const { return age >= lo && age < hi; }
};
AgeRange expert_training_range(Expert expert, const AgeGroupScheme& scheme = {});

struct AugmentConfig {
  bool enabled = true;
  double flip_probability = 0.5;
  double max_rotation_deg = 40.0;
};

// Mirrors image and landmarks together about the image's vertical centre line.
SampleRecord flip_sample(const SampleRecord& sample);
// Rotates image and landmarks about the image centre.
SampleRecord rotate_sample(const SampleRecord& sample, double radians);
// Random flip then random rotation in [-max, +max]; labels untouched.
SampleRecord augment(const SampleRecord& sample, std::mt19937_64& rng, const AugmentConfig& config = {});
// Rotates image and landmarks so the eye centres are level.
SampleRecord align_sample(const SampleRecord& sample);

// Table 1 values per network; `epochs` is the desk-scale schedule.
struct Hyper {
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double decay = 5e-4;
  std::size_t epochs = 10;
};

struct TrainingConfig {
  Hyper can{128, 1e-3, 5e-4, 18};
  Hyper dgn{256, 1e-3, 5e-4, 10};
  Hyper in{128, 1e-3, 5e-4, 8};
  Hyper expert{128, 1e-3, 5e-4, 30};
  Hyper mga{128, 1e-4, 5e-4, 4};
  loss::LossWeights stage2{1.0, 1.0, 0.1, 0.1};
  loss::LossWeights stage3{1e-4, 1e-4, 0.1, 0.1};
  loss::LossWeights stage4{1.0, 1.0, 0.1, 0.1};
  AgeGroupScheme groups;
  AugmentConfig augment;
  bool align = true;  // level the eyes before training and inference
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError
};

// What a stage does, for logs and tests.
struct StagePlan {
  int stage = 0;
  std::string name;          // "stage1.can", "stage3.young", ...
  loss::LossKind loss = loss::LossKind::Can;
  loss::LossWeights weights;
  std::vector<std::string> trainable;  // parameter prefixes left unfrozen
  AgeRange ages;                        // data filter (stage 3 only narrows it)
  Hyper hyper;
};
std::vector<StagePlan> stage_plans(int stage, const TrainingConfig& config);

struct LossHistory {
  std::string name;
  std::vector<double> epoch_loss;  // size-weighted mean batch loss per epoch
};

struct StageResult {
  int stage = 0;
  std::vector<LossHistory> histories;
};

// A record after alignment, resizing and feature extraction.
struct PreparedSample {
  SampleRecord record;           // aligned, resized to the CAN input size
  std::vector<double> geometry;  // GeometricFeature values
  AgeGroup coarse = AgeGroup::Young;
  int fine = 0;
};

std::vector<PreparedSample> prepare(std::span<const SampleRecord> records, const models::ArchConfig& arch,
                                    const TrainingConfig& config);

enum class Network { Can, Dgn, In, Mga };
const char* to_string(Network n);

class Trainer {
 public:
  Trainer(models::ArchConfig arch, TrainingConfig config);

  const models::ArchConfig& arch() const { return arch_; }
  const TrainingConfig& config() const { return config_; }

  // Runs one stage in place. Stage 1 initializes `store` when empty; stage k > 1
  // needs the stage k-1 marker in `store` (StateError otherwise). Throws
  // DataError if a stage's data slice is empty.
  StageResult run(int stage, ParameterStore& store, std::span<const PreparedSample> data) const;

  // The stage-4 objective (fused gender CE, age MAE, coarse-group CE with the
  // stage-4 weights) over `data`, without augmentation. Inference mode once
  // stage 1 has run; a fresh store uses batch statistics instead.
  double objective(ParameterStore& store, std::span<const PreparedSample> data, std::size_t batch_size = 256) const;

 private:
  LossHistory train_can(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                        std::uint64_t seed) const;
  LossHistory train_dgn(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                        std::uint64_t seed) const;
  LossHistory train_in(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                       std::uint64_t seed) const;
  LossHistory train_expert(const StagePlan& plan, Expert expert, ParameterStore& store,
                           std::span<const PreparedSample> data, std::uint64_t seed) const;
  LossHistory train_mga(const StagePlan& plan, ParameterStore& store, std::span<const PreparedSample> data,
                        std::uint64_t seed) const;

  models::ArchConfig arch_;
  TrainingConfig config_;
};

// Highest completed stage recorded in `store`, 0 if none.
int completed_stage(const ParameterStore& store);

// Checkpoint layout: stage{k}.ckpt (and stage3.{expert}.ckpt) in `dir`.
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int stage);
std::filesystem::path expert_checkpoint_path(const std::filesystem::path& dir, Expert expert);

// File-backed stage: loads stage{k-1}.ckpt (StateError if missing), runs the
// stage, writes stage{k}.ckpt and stage{k}.loss.csv.
StageResult run_stage_files(const Trainer& trainer, int stage, const std::filesystem::path& dir,
                            std::span<const PreparedSample> data);

void write_loss_log(const std::filesystem::path& path, const StageResult& result);

// Batched inference. Mga requires a stage >= 3 store; In also fills
// Prediction::experts when expert heads exist.
std::vector<models::Prediction> predict(Network network, ParameterStore& store, const models::ArchConfig& arch,
                                        std::span<const PreparedSample> data, std::size_t batch_size = 256);

// Stacks samples into N×C×H×W images and N×D geometry features.
nn::Tensor stack_images(std::span<const PreparedSample* const> batch, const models::ArchConfig& arch);
nn::Tensor stack_geometry(std::span<const PreparedSample* const> batch);

}  // namespace mga::pipeline
