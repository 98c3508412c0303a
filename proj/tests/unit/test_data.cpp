#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "mga/data.hpp"
#include "mga/errors.hpp"
#include "mga/image.hpp"

using namespace mga;
using namespace mga::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string header() {
  std::string h = "id,image,subject,age,gender";
  for (int i = 1; i <= 68; ++i) h += ",x" + std::to_string(i) + ",y" + std::to_string(i);
  return h;
}

std::string row(const std::string& id, const std::string& gender, std::size_t points = 68) {
  std::string r = id + ",,s" + id + ",33.25," + gender;
  for (std::size_t i = 0; i < points; ++i) r += "," + std::to_string(i) + ".5," + std::to_string(i + 1);
  return r;
}

std::vector<SampleRecord> records_with_subjects(const std::vector<std::size_t>& per_subject) {
  std::vector<SampleRecord> out;
  for (std::size_t s = 0; s < per_subject.size(); ++s) {
    for (std::size_t r = 0; r < per_subject[s]; ++r) {
      SampleRecord rec;
      rec.id = "r" + std::to_string(out.size());
      rec.subject = "s" + std::to_string(s);
      out.push_back(rec);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("image round trip through netpbm") {
  TempDir dir("mga_img_test");
  Image rgb(3, 4, 5);
  for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = static_cast<double>(i % 256) / 255.0;
  write_pnm(dir.path / "a.ppm", rgb);
  CHECK(read_pnm(dir.path / "a.ppm") == rgb);
  Image g(1, 3, 2, 0.2);
  quantize8(g);
  write_pnm(dir.path / "b.pgm", g);
  CHECK(read_pnm(dir.path / "b.pgm") == g);
  std::ofstream(dir.path / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_pnm(dir.path / "bad.ppm"), DataError);
  CHECK(flip_horizontal(flip_horizontal(rgb)) == rgb);
  CHECK(rotate(rgb, 0.0, 2.5, 2.0) == rgb);
}

TEST_CASE("manifest: empty file, fixture round trip, itemized errors") {
  TempDir dir("mga_manifest_test");
  std::ofstream(dir.path / "empty.csv") << "";
  CHECK(load_manifest(dir.path / "empty.csv").empty());

  std::mt19937_64 rng(1);
  std::vector<SampleRecord> recs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    recs[i].id = "id" + std::to_string(i);
    recs[i].subject = "subject" + std::to_string(i % 2);
    recs[i].age = 0.1 + 17.3 * static_cast<double>(i) + 1e-13;
    recs[i].gender = static_cast<int>(i % 2);
    recs[i].landmarks = testing::face(rng, 0.1, 32.123456789, 30.0, 20.0 / 3.0);
    recs[i].image = Image(i == 1 ? 1 : 3, 8, 8, 0.0);
    for (std::size_t k = 0; k < recs[i].image.pixels.size(); ++k) {
      recs[i].image.pixels[k] = static_cast<double>((k * 37 + i) % 256) / 255.0;
    }
  }
  write_manifest(dir.path / "m.csv", recs);
  const auto back = load_manifest(dir.path / "m.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].subject == recs[i].subject);
    CHECK(back[i].age == recs[i].age);
    CHECK(back[i].gender == recs[i].gender);
    CHECK(back[i].landmarks.to_xy() == recs[i].landmarks.to_xy());
    CHECK(back[i].image == recs[i].image);
  }

  std::ofstream(dir.path / "bad.csv") << header() << '\n'
                                      << row("a", "1") << '\n'
                                      << row("b", "") << '\n'
                                      << row("c", "0", 67) << '\n';
  try {
    load_manifest(dir.path / "bad.csv", false);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("gender") != std::string::npos);
    CHECK(msg.find("line 4") != std::string::npos);
    CHECK(msg.find("67") != std::string::npos);
    CHECK(msg.find("line 2") == std::string::npos);
  }
  std::ofstream(dir.path / "hdr.csv") << "id,image\n";
  CHECK_THROWS_AS(load_manifest(dir.path / "hdr.csv"), DataError);
  std::ofstream(dir.path / "img.csv") << header() << '\n' << "z,missing.ppm" << row("z", "1").substr(1) << '\n';
  CHECK_THROWS_AS(load_manifest(dir.path / "img.csv"), DataError);
}

TEST_CASE("folds: one subject per fold, exclusivity, balance") {
  const auto five = records_with_subjects({3, 1, 2, 5, 1});
  const auto split = make_folds(five, 5, 9);
  for (const auto& f : split.folds) {
    std::set<std::string> subjects;
    for (auto i : f) subjects.insert(five[i].subject);
    CHECK(subjects.size() == 1);
  }
  CHECK_THROWS_AS(make_folds(records_with_subjects({1, 1}), 3, 0), ContractError);

  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::size_t> counts(100);
    for (auto& c : counts) c = 1 + static_cast<std::size_t>(std::pow(std::uniform_real_distribution<double>(0, 1)(rng), 3) * 12);
    const auto recs = records_with_subjects(counts);
    const auto s = make_folds(recs, 5, seed);
    std::map<std::string, std::size_t> fold_of;
    std::vector<bool> seen(recs.size(), false);
    for (std::size_t k = 0; k < s.size(); ++k) {
      for (auto i : s.folds[k]) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
        auto [it, fresh] = fold_of.emplace(recs[i].subject, k);
        if (!fresh) CHECK(it->second == k);
      }
    }
    for (bool b : seen) CHECK(b);
    const double mean = static_cast<double>(recs.size()) / 5.0;
    for (const auto& f : s.folds) CHECK(std::abs(static_cast<double>(f.size()) - mean) <= 0.2 * mean);
    CHECK(s.train_indices(0).size() + s.test_indices(0).size() == recs.size());
  }
}

TEST_CASE("synthetic data is deterministic and seed-dependent") {
  SynthConfig c;
  c.samples = 12;
  c.seed = 5;
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].landmarks.to_xy() == b[i].landmarks.to_xy());
    CHECK(a[i].age == b[i].age);
    CHECK(a[i].age >= 0.0);
    CHECK(a[i].age < 80.0);
  }
  c.seed = 6;
  CHECK_FALSE(generate_synthetic(c)[0].image == a[0].image);
  c.image_size = 8;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("appearance profile is weak young and elder, strong adult") {
  SynthConfig c;
  CHECK(appearance_strength(c, 8) == doctest::Approx(c.young_strength));
  CHECK(appearance_strength(c, 35) == doctest::Approx(c.adult_strength));
  CHECK(appearance_strength(c, 70) == doctest::Approx(c.elder_strength));
  for (double a = 0; a < 80; a += 0.5) {
    CHECK(appearance_strength(c, a) >= 0.0);
    CHECK(appearance_strength(c, a) <= 1.0);
  }
}

TEST_CASE("noise-free adult cue patches separate by gender") {
  SynthConfig c;
  c.samples = 300;
  c.seed = 3;
  c.noise = 0.0;
  const auto recs = generate_synthetic(c);
  const auto patches = synthetic_cue_patches(c);
  REQUIRE(patches.size() == recs.size());
  double max_female = 0.0, min_male = 1e9;
  std::size_t used = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].age < 26 || recs[i].age >= 44 || patches[i].pixels.size() < 20) continue;
    // Patch contrast: standard deviation of the green channel over the patch.
    double m = 0, s = 0;
    for (auto [y, x] : patches[i].pixels) m += recs[i].image.at(1, y, x);
    m /= patches[i].pixels.size();
    for (auto [y, x] : patches[i].pixels) s += std::pow(recs[i].image.at(1, y, x) - m, 2);
    s = std::sqrt(s / patches[i].pixels.size());
    ++used;
    if (recs[i].gender == 1) min_male = std::min(min_male, s);
    else max_female = std::max(max_female, s);
  }
  CHECK(used > 30);
  CHECK(max_female < min_male);
}

TEST_CASE("geometry cue survives the feature pipeline") {
  SynthConfig c;
  c.samples = 1000;
  c.seed = 4;
  const auto recs = generate_synthetic(c);
  const std::size_t d = geometry::default_feature_length();
  std::vector<double> sum[2], sq[2];
  std::size_t n[2] = {0, 0};
  for (int g = 0; g < 2; ++g) sum[g].assign(d, 0.0), sq[g].assign(d, 0.0);
  for (const auto& r : recs) {
    const auto f = geometry::build_feature(r.landmarks).values;
    for (std::size_t k = 0; k < d; ++k) {
      sum[r.gender][k] += f[k];
      sq[r.gender][k] += f[k] * f[k];
    }
    n[r.gender]++;
  }
  double best = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double m[2], v[2];
    for (int g = 0; g < 2; ++g) {
      m[g] = sum[g][k] / n[g];
      v[g] = sq[g][k] / n[g] - m[g] * m[g];
    }
    const double spread = std::sqrt((v[0] + v[1]) / 2);
    best = std::max(best, std::abs(m[1] - m[0]) / spread);
  }
  // Best class-mean gap, in units of the within-class spread.
  MESSAGE("best standardized gap " << best);
  CHECK(best > 1.0);
}
