#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mga/core/params.hpp"
#include "mga/image.hpp"
#include "mga/models.hpp"
#include "mga/pipeline.hpp"

namespace mga::eval {

using models::Prediction;
using nn::Tensor;

struct Truth {
  double age = 0.0;
  int gender = 0;
};

// Square count table, rows = truth, columns = prediction.
struct Confusion {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  explicit Confusion(std::size_t n = 0) : classes(n), counts(n * n, 0) {}
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
};

// Percentages in [0, 100]; MAE in years.
struct EvalReport {
  std::size_t count = 0;
  double gender_accuracy = 0.0;
  // Indexed by the coarse group of the true age; empty when a group has no samples.
  std::array<std::optional<double>, 3> group_gender_accuracy;
  std::array<std::size_t, 3> group_counts{};
  std::optional<double> age_mae;  // when every prediction carries an age
  // Fine-group metrics, when every prediction yields a fine group.
  std::optional<double> exact;
  std::optional<double> one_off;
  Confusion gender_confusion{2};
  std::optional<Confusion> fine_confusion;
};

// argmax of the fine-group probabilities when present, else the decade of
// the predicted age, else nothing.
std::optional<int> predicted_fine_group(const Prediction& p, const pipeline::AgeGroupScheme& scheme = {});

// ContractError when the lists differ in length or are empty.
EvalReport compute_metrics(std::span<const Prediction> predictions, std::span<const Truth> truths,
                           const pipeline::AgeGroupScheme& scheme = {});

nlohmann::json to_json(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

// --- class activation maps ----------------------------------------------------

// M(y, x) = sum_k weights[k] * maps[k, y, x]; maps is K×h×w.
Tensor class_activation_map(const Tensor& maps, std::span<const double> weights);

// Bilinear resize of an h×w map with pixel-centre alignment.
Tensor bilinear_upsample(const Tensor& map, std::size_t height, std::size_t width);

struct CamResult {
  std::string head;
  int target = 0;
  Tensor raw;        // h×w, last pooled CAN maps
  Tensor upsampled;  // input height × width
  double min = 0.0;  // of `upsampled`
  double max = 0.0;
};

// Heads: "can.gender", "in.gender", "expert.young|adult|elder". For the
// integrated heads only the weights that multiply CAN features are used.
// Other heads (e.g. "dgn.gender") have no spatial trunk: ContractError.
CamResult compute_cam(nn::ParameterStore& store, const models::ArchConfig& arch, const data::Image& image,
                      int target, const std::string& head);

// Writes <stem>.pgm (min-max scaled), <stem>.csv (upsampled values),
// <stem>.raw.csv (pre-upsampling values) and <stem>.json (metadata).
void write_cam(const std::filesystem::path& stem, const CamResult& cam);

}  // namespace mga::eval
