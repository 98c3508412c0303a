#include "mga/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "mga/errors.hpp"
#include "mga/text.hpp"

namespace mga::data {

using geometry::LandmarkSet;
using geometry::Point;

void SampleRecord::validate() const {
  if (!(age >= 0.0) || !std::isfinite(age)) throw DataError("record " + id + ": age must be a finite value >= 0");
  if (gender != 0 && gender != 1) throw DataError("record " + id + ": gender must be 0 or 1");
}

// --- manifest ----------------------------------------------------------------

namespace {

constexpr std::size_t kFixedColumns = 5;
constexpr std::size_t kColumns = kFixedColumns + 2 * geometry::kLandmarkCount;

std::string manifest_header() {
  std::string h = "id,image,subject,age,gender";
  for (std::size_t i = 1; i <= geometry::kLandmarkCount; ++i) {
    h += ",x" + std::to_string(i) + ",y" + std::to_string(i);
  }
  return h;
}

std::string image_extension(const Image& img) { return img.channels == 1 ? ".pgm" : ".ppm"; }

}  // namespace

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path, bool load_images) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  const auto base = path.parent_path();
  std::vector<SampleRecord> records;
  std::vector<std::string> problems;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    if (!saw_header) {
      if (text::trim(line) != manifest_header()) {
        throw DataError(path.string() + ": line " + std::to_string(line_no) +
                        ": expected header id,image,subject,age,gender,x1,y1,...,x68,y68");
      }
      saw_header = true;
      continue;
    }
    const auto fields = text::split(line, ',');
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() < kFixedColumns) {
      problems.push_back(where + ": missing field (" + std::to_string(fields.size()) + " of " +
                         std::to_string(kColumns) + " columns)");
      continue;
    }
    if (fields.size() != kColumns) {
      const std::size_t coords = fields.size() - kFixedColumns;
      problems.push_back(where + ": landmark row has " + std::to_string(coords / 2) +
                         (coords % 2 ? ".5" : "") + " points, expected 68");
      continue;
    }
    SampleRecord rec;
    rec.id = std::string(text::trim(fields[0]));
    rec.image_path = std::string(text::trim(fields[1]));
    rec.subject = std::string(text::trim(fields[2]));
    std::vector<std::string> row_problems;
    if (rec.id.empty()) row_problems.push_back("missing id");
    if (rec.subject.empty()) row_problems.push_back("missing subject");
    if (text::trim(fields[3]).empty()) {
      row_problems.push_back("missing age");
    } else if (auto age = text::parse_double(fields[3]); !age || *age < 0.0) {
      row_problems.push_back("age must be a number >= 0");
    } else {
      rec.age = *age;
    }
    if (text::trim(fields[4]).empty()) {
      row_problems.push_back("missing gender");
    } else if (auto g = text::parse_int(fields[4]); !g || (*g != 0 && *g != 1)) {
      row_problems.push_back("gender must be 0 or 1");
    } else {
      rec.gender = static_cast<int>(*g);
    }
    std::vector<double> xy(2 * geometry::kLandmarkCount);
    for (std::size_t i = 0; i < xy.size(); ++i) {
      auto v = text::parse_double(fields[kFixedColumns + i]);
      if (!v || !std::isfinite(*v)) {
        row_problems.push_back("landmark column " + std::to_string(kFixedColumns + i + 1) + " is not a finite number");
        break;
      }
      xy[i] = *v;
    }
    if (row_problems.empty()) {
      rec.landmarks = LandmarkSet::from_xy(xy);
      if (load_images && !rec.image_path.empty()) {
        try {
          rec.image = read_pnm(base / rec.image_path);
        } catch (const DataError& e) {
          row_problems.push_back(e.what());
        }
      }
    }
    if (!row_problems.empty()) {
      std::string joined;
      for (const auto& p : row_problems) joined += (joined.empty() ? "" : ", ") + p;
      problems.push_back(where + " (" + (rec.id.empty() ? "?" : rec.id) + "): " + joined);
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " malformed row(s): ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw DataError(msg);
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto base = path.parent_path();
  std::ostringstream out;
  out << manifest_header() << '\n';
  for (const auto& rec : records) {
    rec.validate();
    for (const std::string* field : {&rec.id, &rec.subject, &rec.image_path}) {
      if (field->find_first_of(",\n\r") != std::string::npos) {
        throw DataError("record " + rec.id + ": ids and paths may not contain commas or newlines");
      }
    }
    std::string image_path = rec.image_path;
    if (!rec.image.empty()) {
      image_path = "images/" + rec.id + image_extension(rec.image);
      write_pnm(base / image_path, rec.image);
    }
    out << rec.id << ',' << image_path << ',' << rec.subject << ',' << text::format_double(rec.age) << ','
        << rec.gender;
    for (double v : rec.landmarks.to_xy()) out << ',' << text::format_double(v);
    out << '\n';
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw DataError("cannot write manifest: " + path.string());
  file << out.str();
}

// --- folds -------------------------------------------------------------------

std::vector<std::size_t> FoldSplit::test_indices(std::size_t k) const { return folds.at(k); }

std::vector<std::size_t> FoldSplit::train_indices(std::size_t k) const {
  if (k >= folds.size()) throw ContractError("fold " + std::to_string(k) + " out of range");
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldSplit make_folds(std::span<const SampleRecord> records, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("make_folds: K must be at least 2");
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = members.try_emplace(records[i].subject);
    if (inserted) subjects.push_back(records[i].subject);
    it->second.push_back(i);
  }
  if (subjects.size() < k) {
    throw ContractError("make_folds: " + std::to_string(subjects.size()) + " distinct subjects for " +
                        std::to_string(k) + " folds");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  FoldSplit split;
  split.folds.resize(k);
  for (const auto& s : subjects) {
    auto smallest = std::min_element(split.folds.begin(), split.folds.end(),
                                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    const auto& idx = members[s];
    smallest->insert(smallest->end(), idx.begin(), idx.end());
  }
  for (auto& f : split.folds) std::sort(f.begin(), f.end());
  return split;
}

// --- synthetic generator -----------------------------------------------------

void SynthConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(young_strength) || !unit(adult_strength) || !unit(elder_strength) || !unit(geometry_strength)) {
    throw ConfigError("synth: cue strengths must lie in [0, 1]");
  }
  if (image_size < 16) throw ConfigError("synth: image_size must be at least 16");
  if (!(noise >= 0.0)) throw ConfigError("synth: noise must be >= 0");
  if (!(ramp_years >= 0.0)) throw ConfigError("synth: ramp_years must be >= 0");
  if (max_records_per_subject == 0) throw ConfigError("synth: max_records_per_subject must be positive");
}

double appearance_strength(const SynthConfig& config, double age) {
  // Linear ramp of width ramp_years centred on each boundary.
  auto blend = [&](double boundary, double below, double above) {
    if (config.ramp_years <= 0.0) return age < boundary ? below : above;
    const double t = std::clamp((age - boundary) / config.ramp_years + 0.5, 0.0, 1.0);
    return below + t * (above - below);
  };
  if (age < 35.0) return blend(20.0, config.young_strength, config.adult_strength);
  return blend(50.0, config.adult_strength, config.elder_strength);
}

namespace {

using Shape68 = std::array<Point, geometry::kLandmarkCount>;

// Frontal mean face in face units: width about 1, nose tip near the origin,
// y pointing down.
Shape68 face_template() {
  Shape68 p{};
  auto set = [&p](int i, double x, double y) { p[static_cast<std::size_t>(i - 1)] = {x, y}; };
  for (int i = 1; i <= 17; ++i) {
    const double th = std::numbers::pi * (i - 1) / 16.0;
    set(i, -0.5 * std::cos(th), -0.05 + 0.6 * std::sin(th));
  }
  for (int i = 0; i < 5; ++i) {
    const double t = i / 4.0;
    const double arch = 0.04 * std::sin(std::numbers::pi * t);
    set(18 + i, -0.40 + 0.30 * t, -0.32 - arch);
    set(27 - i, 0.40 - 0.30 * t, -0.32 - arch);
  }
  set(28, 0, -0.22);
  set(29, 0, -0.13);
  set(30, 0, -0.04);
  set(31, 0, 0.05);
  set(32, -0.10, 0.10);
  set(33, -0.05, 0.12);
  set(34, 0, 0.13);
  set(35, 0.05, 0.12);
  set(36, 0.10, 0.10);
  set(37, -0.32, -0.18);
  set(38, -0.26, -0.21);
  set(39, -0.18, -0.21);
  set(40, -0.12, -0.18);
  set(41, -0.18, -0.155);
  set(42, -0.26, -0.155);
  for (int i = 37; i <= 42; ++i) {
    const Point q = p[static_cast<std::size_t>(i - 1)];
    set(geometry::mirror_index(i), -q.x, q.y);
  }
  set(49, -0.18, 0.30);
  set(50, -0.11, 0.26);
  set(51, -0.04, 0.245);
  set(52, 0, 0.25);
  set(53, 0.04, 0.245);
  set(54, 0.11, 0.26);
  set(55, 0.18, 0.30);
  set(56, 0.11, 0.35);
  set(57, 0.04, 0.37);
  set(58, 0, 0.372);
  set(59, -0.04, 0.37);
  set(60, -0.11, 0.35);
  set(61, -0.14, 0.30);
  set(62, -0.05, 0.285);
  set(63, 0, 0.285);
  set(64, 0.05, 0.285);
  set(65, 0.14, 0.30);
  set(66, 0.05, 0.315);
  set(67, 0, 0.318);
  set(68, -0.05, 0.315);
  return p;
}

Point& at(Shape68& s, int i) { return s[static_cast<std::size_t>(i - 1)]; }
const Point& at(const Shape68& s, int i) { return s[static_cast<std::size_t>(i - 1)]; }

Point centroid(const Shape68& s, int first, int last) {
  Point c;
  for (int i = first; i <= last; ++i) {
    c.x += at(s, i).x;
    c.y += at(s, i).y;
  }
  const double n = last - first + 1;
  return {c.x / n, c.y / n};
}

void scale_about(Shape68& s, int first, int last, double factor) {
  const Point c = centroid(s, first, last);
  for (int i = first; i <= last; ++i) {
    at(s, i).x = c.x + (at(s, i).x - c.x) * factor;
    at(s, i).y = c.y + (at(s, i).y - c.y) * factor;
  }
}

// Frontal face shape for one record, before pose.
Shape68 deform(Shape68 s, int gender, double age, double geometry_strength) {
  const double sign = gender == 1 ? 1.0 : -1.0;
  // Gender: wider lower jaw, smaller eyes and lower brows for males.
  for (int i = 1; i <= 17; ++i) {
    const double w = std::clamp((at(s, i).y + 0.05) / 0.6, 0.0, 1.0);
    at(s, i).x *= 1.0 + 0.10 * geometry_strength * sign * w;
  }
  scale_about(s, 37, 42, 1.0 - 0.10 * geometry_strength * sign);
  scale_about(s, 43, 48, 1.0 - 0.10 * geometry_strength * sign);
  for (int i = 18; i <= 27; ++i) at(s, i).y += 0.02 * geometry_strength * sign;
  // Growth: the lower face lengthens and eyes shrink relative to the face until 20.
  const double grown = std::clamp(age / 20.0, 0.0, 1.0);
  for (auto& p : s) {
    if (p.y > 0.05) p.y = 0.05 + (p.y - 0.05) * (0.80 + 0.20 * grown);
  }
  scale_about(s, 37, 42, 1.15 - 0.15 * grown);
  scale_about(s, 43, 48, 1.15 - 0.15 * grown);
  // Sagging after 50: mouth corners, jaw and brows drop.
  const double sag = std::clamp((age - 50.0) / 30.0, 0.0, 1.0);
  for (int i : {49, 55, 61, 65}) at(s, i).y += 0.03 * sag;
  for (int i = 3; i <= 15; ++i) at(s, i).y += 0.02 * sag;
  for (int i = 18; i <= 27; ++i) at(s, i).y += 0.015 * sag;
  return s;
}

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

double segment_distance(Point a, Point b, double x, double y) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((x - a.x) * dx + (y - a.y) * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(x - a.x - t * dx, y - a.y - t * dy);
}

double polyline_distance(const Shape68& s, int first, int last, double x, double y) {
  double d = std::numeric_limits<double>::infinity();
  for (int i = first; i < last; ++i) d = std::min(d, segment_distance(at(s, i), at(s, i + 1), x, y));
  return d;
}

// Texture amplitude baseline: grows with age in steps at the group
// boundaries (wrinkles), so the best gender threshold depends on the group.
double texture_base(double age) {
  const double a = std::clamp((age - 20.0) / 4.0 + 0.5, 0.0, 1.0);
  const double b = std::clamp((age - 50.0) / 4.0 + 0.5, 0.0, 1.0);
  return 0.04 + 0.08 * a + 0.08 * b;
}

constexpr double kGenderAmplitude = 0.24;

struct Pose {
  double angle = 0.0;
  double scale = 1.0;
  Point center;
  double yaw = 0.0;      // compression of one side, in [0, 1)
  bool yaw_right = true; // compress u < 0 (subject's right)
};

Point to_image(const Pose& pose, Point p) {
  double u = p.x;
  if ((pose.yaw_right && u < 0) || (!pose.yaw_right && u > 0)) u *= 1.0 - pose.yaw;
  const double c = std::cos(pose.angle);
  const double s = std::sin(pose.angle);
  return {pose.center.x + pose.scale * (c * u - s * p.y), pose.center.y + pose.scale * (s * u + c * p.y)};
}

Point to_face(const Pose& pose, double x, double y) {
  const double dx = (x - pose.center.x) / pose.scale;
  const double dy = (y - pose.center.y) / pose.scale;
  const double c = std::cos(pose.angle);
  const double s = std::sin(pose.angle);
  double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  if ((pose.yaw_right && u < 0) || (!pose.yaw_right && u > 0)) u /= 1.0 - pose.yaw;
  return {u, v};
}

struct Subject {
  int gender = 0;
  double age = 0.0;
  double skin = 0.0;
  std::array<double, 3> tint{};
  Shape68 jitter{};
};

std::vector<SampleRecord> generate(const SynthConfig& config, std::vector<CuePatch>* patches) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const Shape68 base_shape = face_template();
  const std::size_t size = config.image_size;
  const double px = static_cast<double>(size);
  std::vector<SampleRecord> out;
  out.reserve(config.samples);
  std::size_t subject_no = 0;
  while (out.size() < config.samples) {
    Subject subj;
    subj.gender = unit(rng) < 0.5 ? 0 : 1;
    subj.age = uniform(0.0, 80.0);
    subj.skin = 0.02 * gauss(rng);
    subj.tint = {uniform(-0.02, 0.02), uniform(-0.02, 0.02), uniform(-0.02, 0.02)};
    for (auto& p : subj.jitter) p = {0.010 * gauss(rng), 0.010 * gauss(rng)};
    const std::size_t count =
        std::uniform_int_distribution<std::size_t>(1, config.max_records_per_subject)(rng);
    ++subject_no;
    for (std::size_t r = 0; r < count && out.size() < config.samples; ++r) {
      double age = subj.age + uniform(-2.0, 2.0);
      if (age < 0.0) age = -age;
      if (age >= 80.0) age = 160.0 - age;
      age = std::clamp(age, 0.0, std::nextafter(80.0, 0.0));

      Shape68 shape = deform(base_shape, subj.gender, age, config.geometry_strength);
      for (std::size_t i = 0; i < shape.size(); ++i) {
        shape[i].x += subj.jitter[i].x + 0.004 * gauss(rng);
        shape[i].y += subj.jitter[i].y + 0.004 * gauss(rng);
      }

      Pose pose;
      pose.angle = uniform(-10.0, 10.0) * std::numbers::pi / 180.0;
      pose.scale = px * uniform(0.50, 0.58);
      pose.center = {px / 2.0 + uniform(-2.0, 2.0) * px / 64.0, px / 2.0 + uniform(-2.0, 2.0) * px / 64.0};
      pose.yaw = uniform(0.0, 0.3);
      pose.yaw_right = unit(rng) < 0.5;

      std::array<Point, geometry::kLandmarkCount> landmarks{};
      for (std::size_t i = 0; i < shape.size(); ++i) landmarks[i] = to_image(pose, shape[i]);

      // Face outline: jaw plus a forehead arc closing it from 17 back to 1.
      std::vector<Point> outline(shape.begin(), shape.begin() + 17);
      const Point j1 = at(shape, 1);
      const Point j17 = at(shape, 17);
      const Point arc_c{(j1.x + j17.x) / 2.0, (j1.y + j17.y) / 2.0};
      const double arc_a = (j17.x - j1.x) / 2.0;
      for (int k = 1; k < 12; ++k) {
        const double th = std::numbers::pi * k / 12.0;
        outline.push_back({arc_c.x + arc_a * std::cos(th), arc_c.y - 0.45 * std::sin(th)});
      }
      std::vector<Point> lips(shape.begin() + 48, shape.begin() + 60);
      const Point eye_r = centroid(shape, 37, 42);
      const Point eye_l = centroid(shape, 43, 48);
      const double eye_rx = (at(shape, 40).x - at(shape, 37).x) / 2.0;
      const double eye_ry = (at(shape, 41).y - at(shape, 38).y) / 1.6;
      const double patch_top = at(shape, 31).y;

      const double skin = std::clamp(0.80 - 0.0035 * age + subj.skin, 0.1, 0.95);
      const std::array<double, 3> skin_rgb{skin + subj.tint[0], 0.86 * skin + subj.tint[1], 0.74 * skin + subj.tint[2]};
      const std::array<double, 3> bg{uniform(0.15, 0.45), uniform(0.15, 0.45), uniform(0.15, 0.45)};
      const double sign = subj.gender == 1 ? 1.0 : -1.0;
      const double amplitude =
          std::max(0.0, texture_base(age) + sign * 0.5 * kGenderAmplitude * appearance_strength(config, age) +
                            0.4 * config.noise * gauss(rng));

      // Texture cells live in the face frame (about two pixels wide) so the
      // cue survives the resampling that rotation augmentation applies.
      constexpr double kCell = 0.06;
      constexpr int kCells = 32;
      std::vector<double> cells(kCells * kCells);
      for (auto& v : cells) v = uniform(-1.0, 1.0);
      auto texture = [&](Point f) {
        const int cx = std::clamp(static_cast<int>(std::floor(f.x / kCell)) + kCells / 2, 0, kCells - 1);
        const int cy = std::clamp(static_cast<int>(std::floor(f.y / kCell)) + kCells / 2, 0, kCells - 1);
        return cells[static_cast<std::size_t>(cy * kCells + cx)];
      };

      Image img(3, size, size);
      CuePatch patch;
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const Point f = to_face(pose, x + 0.5, y + 0.5);
          std::array<double, 3> c = bg;
          if (inside_polygon(outline, f.x, f.y)) {
            c = skin_rgb;
            const double er = std::pow((f.x - eye_r.x) / eye_rx, 2) + std::pow((f.y - eye_r.y) / eye_ry, 2);
            const double el = std::pow((f.x - eye_l.x) / eye_rx, 2) + std::pow((f.y - eye_l.y) / eye_ry, 2);
            const bool in_lips = inside_polygon(lips, f.x, f.y);
            if (er < 1.0 || el < 1.0) {
              c = {0.12, 0.10, 0.10};
            } else if (std::min(polyline_distance(shape, 18, 22, f.x, f.y),
                                polyline_distance(shape, 23, 27, f.x, f.y)) < 0.02) {
              c = {0.3 * skin, 0.25 * skin, 0.2 * skin};
            } else if (in_lips) {
              c = {0.80 * skin, 0.38 * skin, 0.40 * skin};
            } else if (polyline_distance(shape, 28, 31, f.x, f.y) < 0.012 ||
                       polyline_distance(shape, 32, 36, f.x, f.y) < 0.012) {
              c = {0.82 * skin_rgb[0], 0.82 * skin_rgb[1], 0.82 * skin_rgb[2]};
            } else if (f.y > patch_top) {
              const double t = amplitude * texture(f);
              for (auto& v : c) v += t;
              patch.pixels.emplace_back(y, x);
            }
          }
          for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch] + config.noise * gauss(rng);
        }
      }
      quantize8(img);

      SampleRecord rec;
      char id[32];
      std::snprintf(id, sizeof id, "syn%05zu", out.size() + 1);
      char subject[32];
      std::snprintf(subject, sizeof subject, "subj%05zu", subject_no);
      rec.id = id;
      rec.subject = subject;
      rec.age = age;
      rec.gender = subj.gender;
      rec.landmarks = LandmarkSet(landmarks);
      rec.image = std::move(img);
      out.push_back(std::move(rec));
      if (patches) patches->push_back(std::move(patch));
    }
  }
  return out;
}

}  // namespace

std::vector<SampleRecord> generate_synthetic(const SynthConfig& config) { return generate(config, nullptr); }

std::vector<CuePatch> synthetic_cue_patches(const SynthConfig& config) {
  std::vector<CuePatch> patches;
  generate(config, &patches);
  return patches;
}

}  // namespace mga::data
