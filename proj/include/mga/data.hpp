#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mga/geometry.hpp"
#include "mga/image.hpp"

namespace mga::data {

// Gender labels: 0 = female, 1 = male.
struct SampleRecord {
  std::string id;
  std::string image_path;  // relative to the manifest directory, may be empty
  Image image;             // loaded pixels, or inline data for generated records
  geometry::LandmarkSet landmarks;
  double age = 0.0;  // years
  int gender = 0;
  std::string subject;

  void validate() const;  // DataError on a negative age or gender outside {0, 1}
};

// Manifest: CSV with header
//   id,image,subject,age,gender,x1,y1,...,x68,y68
// Doubles are written in shortest round-trip form, so a write/read cycle
// reproduces every value bit for bit. `image` is a P5/P6 path relative to the
// manifest file.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path, bool load_images = true);
// Writes the manifest; records with pixels but no image_path get
// images/<id>.ppm (or .pgm) next to the manifest.
void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records);

struct FoldSplit {
  std::vector<std::vector<std::size_t>> folds;  // record indices, ascending

  std::size_t size() const { return folds.size(); }
  std::vector<std::size_t> test_indices(std::size_t k) const;
  std::vector<std::size_t> train_indices(std::size_t k) const;  // every other fold
};

// Subject-exclusive K-fold split. Subjects are shuffled with `seed` and each
// goes to the fold holding the fewest records so far (lowest index on ties).
FoldSplit make_folds(std::span<const SampleRecord> records, std::size_t k = 5, std::uint64_t seed = 0);

struct SynthConfig {
  std::size_t samples = 3000;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
  // Appearance-cue strength at the centre of each coarse age group; linear
  // ramps of `ramp_years` join them across the 20 and 50 year boundaries.
  double young_strength = 0.1;
  double adult_strength = 1.0;
  double elder_strength = 0.1;
  double ramp_years = 6.0;
  // Gender-dependent face-shape change, constant over age.
  double geometry_strength = 0.3;
  // Pixel noise standard deviation; also scales per-record cue jitter.
  double noise = 0.05;
  std::size_t max_records_per_subject = 3;

  void validate() const;  // ConfigError
};

// Appearance-cue strength in [0, 1] at `age`.
double appearance_strength(const SynthConfig& config, double age);

// Deterministic given the config (including its seed). Records carry inline
// images; image_path is empty.
std::vector<SampleRecord> generate_synthetic(const SynthConfig& config);

// The textured patch below the nose, in pixels, for record `index` of a
// generate_synthetic call (exposed for tests). Empty when out of range.
struct CuePatch {
  std::vector<std::pair<std::size_t, std::size_t>> pixels;  // (y, x)
};
std::vector<CuePatch> synthetic_cue_patches(const SynthConfig& config);

}  // namespace mga::data
