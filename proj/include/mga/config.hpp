#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "mga/data.hpp"
#include "mga/models.hpp"
#include "mga/pipeline.hpp"

namespace mga::config {

struct DataConfig {
  std::string manifest;  // relative paths resolve against the config file
  std::size_t folds = 5;
  std::uint64_t fold_seed = 0;
};

// Everything a run needs, in one JSON file. Missing keys keep their
// defaults; unknown keys are rejected.
struct RunConfig {
  std::string preset = "desk";  // "desk" or "reference" architecture base
  models::ArchConfig arch = models::ArchConfig::desk();
  pipeline::TrainingConfig training;
  data::SynthConfig synth;
  DataConfig data;

  void validate() const;  // ConfigError
};

// Default seed used when neither the config nor --seed supplies one.
inline constexpr std::uint64_t kDefaultSeed = 0;

RunConfig default_config(const std::string& preset = "desk");
RunConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

// ConfigError on unreadable files, malformed JSON or invalid values.
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

// One seed for training, synthesis and fold assignment.
void apply_seed(RunConfig& config, std::uint64_t seed);

}  // namespace mga::config
