#include "mga/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mga/errors.hpp"
#include "mga/text.hpp"

namespace mga::geometry {
namespace {

// Subject's right half-face: jaw to chin, right brow, nose ridge, right half
// of the nose base, right eye, right half of the outer and inner lips.
constexpr std::array<int, 39> kRightHalf{
    1,  2,  3,  4,  5,  6,  7,  8,  9,       // jaw, 9 = chin
    18, 19, 20, 21, 22,                      // right brow
    28, 29, 30, 31,                          // nose ridge
    32, 33, 34,                              // nose base, 34 = centre
    37, 38, 39, 40, 41, 42,                  // right eye
    49, 50, 51, 52, 58, 59, 60,              // outer lip, 52 / 58 = centres
    61, 62, 63, 67, 68,                      // inner lip, 63 / 67 = centres
};

constexpr std::array<int, 69> make_mirror_table() {
  std::array<int, 69> m{};
  for (int i = 0; i <= 68; ++i) m[i] = i;
  auto pair = [&m](int a, int b) {
    m[a] = b;
    m[b] = a;
  };
  for (int i = 1; i <= 8; ++i) pair(i, 18 - i);
  for (int i = 18; i <= 22; ++i) pair(i, 45 - i);
  pair(32, 36);
  pair(33, 35);
  pair(37, 46);
  pair(38, 45);
  pair(39, 44);
  pair(40, 43);
  pair(41, 48);
  pair(42, 47);
  pair(49, 55);
  pair(50, 54);
  pair(51, 53);
  pair(56, 60);
  pair(57, 59);
  pair(61, 65);
  pair(62, 64);
  pair(66, 68);
  return m;
}

constexpr auto kMirror = make_mirror_table();

Point mean_of(const LandmarkSet& l, int first, int last) {
  Point c;
  for (int i = first; i <= last; ++i) {
    c.x += l(i).x;
    c.y += l(i).y;
  }
  const double n = last - first + 1;
  return {c.x / n, c.y / n};
}

template <typename F>
LandmarkSet map_points(const LandmarkSet& l, F&& f) {
  std::array<Point, kLandmarkCount> pts{};
  for (std::size_t i = 0; i < kLandmarkCount; ++i) pts[i] = f(l.points()[i]);
  return LandmarkSet(pts);
}

}  // namespace

LandmarkSet::LandmarkSet(const std::array<Point, kLandmarkCount>& points) : points_(points) {
  for (const auto& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw GeometryError("landmark coordinates must be finite");
  }
}

LandmarkSet LandmarkSet::from_xy(std::span<const double> xy) {
  if (xy.size() != 2 * kLandmarkCount) {
    throw GeometryError("expected " + std::to_string(2 * kLandmarkCount) + " landmark coordinates, got " +
                        std::to_string(xy.size()));
  }
  std::array<Point, kLandmarkCount> pts{};
  for (std::size_t i = 0; i < kLandmarkCount; ++i) pts[i] = {xy[2 * i], xy[2 * i + 1]};
  return LandmarkSet(pts);
}

std::vector<double> LandmarkSet::to_xy() const {
  std::vector<double> xy;
  xy.reserve(2 * kLandmarkCount);
  for (const auto& p : points_) {
    xy.push_back(p.x);
    xy.push_back(p.y);
  }
  return xy;
}

const char* to_string(Side side) { return side == Side::Left ? "left" : "right"; }

std::span<const int> right_half_indices() { return kRightHalf; }

int mirror_index(int one_based) {
  if (one_based < 1 || one_based > 68) throw GeometryError("landmark index out of range");
  return kMirror[static_cast<std::size_t>(one_based)];
}

Point right_eye_center(const LandmarkSet& landmarks) { return mean_of(landmarks, 37, 42); }
Point left_eye_center(const LandmarkSet& landmarks) { return mean_of(landmarks, 43, 48); }

LandmarkSet rotate(const LandmarkSet& landmarks, Point center, double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  return map_points(landmarks, [&](Point p) {
    const double dx = p.x - center.x;
    const double dy = p.y - center.y;
    return Point{center.x + c * dx - s * dy, center.y + s * dx + c * dy};
  });
}

LandmarkSet translate(const LandmarkSet& landmarks, double dx, double dy) {
  return map_points(landmarks, [&](Point p) { return Point{p.x + dx, p.y + dy}; });
}

LandmarkSet scale(const LandmarkSet& landmarks, double factor) {
  return map_points(landmarks, [&](Point p) { return Point{p.x * factor, p.y * factor}; });
}

LandmarkSet mirror(const LandmarkSet& landmarks, double axis_x) {
  std::array<Point, kLandmarkCount> pts{};
  for (int i = 1; i <= 68; ++i) {
    const Point& src = landmarks(mirror_index(i));
    pts[static_cast<std::size_t>(i - 1)] = {2.0 * axis_x - src.x, src.y};
  }
  return LandmarkSet(pts);
}

Alignment align_rotation(const LandmarkSet& landmarks) {
  const Point right = right_eye_center(landmarks);
  const Point left = left_eye_center(landmarks);
  const double vx = left.x - right.x;
  const double vy = left.y - right.y;
  if (std::hypot(vx, vy) == 0.0) throw GeometryError("eye centres coincide; cannot align");
  const Point center{(left.x + right.x) / 2.0, (left.y + right.y) / 2.0};
  const double angle = -std::atan2(vy, vx);
  return {rotate(landmarks, center, angle), angle, center};
}

Side select_side(const LandmarkSet& aligned) {
  const double nose_x = aligned(kNoseTip).x;
  const double right_span = std::abs(nose_x - right_eye_center(aligned).x);
  const double left_span = std::abs(left_eye_center(aligned).x - nose_x);
  return left_span > right_span ? Side::Left : Side::Right;
}

std::vector<Point> right_half(const LandmarkSet& landmarks) {
  std::vector<Point> out;
  out.reserve(kRightHalf.size());
  for (int idx : kRightHalf) out.push_back(landmarks(idx));
  return out;
}

std::vector<Point> project_to_right(const LandmarkSet& landmarks) {
  const double nose_x = landmarks(kNoseTip).x;
  std::vector<Point> out;
  out.reserve(kRightHalf.size());
  for (int idx : kRightHalf) {
    const Point& p = landmarks(mirror_index(idx));
    out.push_back({2.0 * nose_x - p.x, p.y});
  }
  return out;
}

std::vector<Point> normalize_half(std::span<const Point> points, Point nose) {
  if (points.size() < 2) throw GeometryError("normalize_half needs at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const auto& p : points) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  const double sx = std::sqrt(vx / n);
  const double sy = std::sqrt(vy / n);
  if (!(sx > 0.0) || !(sy > 0.0)) throw GeometryError("degenerate landmarks: zero spread in half-face");
  std::vector<Point> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({(p.x - nose.x) / sx, (p.y - nose.y) / sy});
  return out;
}

std::vector<double> pairwise_distances(std::span<const Point> points) {
  if (points.size() < 2) throw GeometryError("pairwise_distances needs at least two points");
  std::vector<double> out;
  out.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      out.push_back(std::hypot(points[i].x - points[j].x, points[i].y - points[j].y));
    }
  }
  return out;
}

GeometricFeature build_feature(const LandmarkSet& landmarks, const GeometryOptions& options) {
  const Alignment aligned = align_rotation(landmarks);
  const Side side = select_side(aligned.landmarks);
  std::vector<Point> half = side == Side::Right ? right_half(aligned.landmarks) : project_to_right(aligned.landmarks);

  // Position of the nose tip inside the half-face ordering.
  std::size_t nose_pos = 0;
  while (kRightHalf[nose_pos] != kNoseTip) ++nose_pos;

  if (options.nose_eye_prescale) {
    std::size_t bridge = 0, eye = 0;
    for (std::size_t i = 0; i < kRightHalf.size(); ++i) {
      if (kRightHalf[i] == 28) bridge = i;
      if (kRightHalf[i] == 40) eye = i;
    }
    const double d = std::hypot(half[bridge].x - half[eye].x, half[bridge].y - half[eye].y);
    if (!(d > 0.0)) throw GeometryError("degenerate landmarks: nose bridge and eye corner coincide");
    for (auto& p : half) p = {p.x / d, p.y / d};
  }

  const std::vector<Point> normalized = normalize_half(half, half[nose_pos]);
  const std::vector<double> distances = pairwise_distances(normalized);

  GeometricFeature feature;
  feature.side = side;
  feature.n = normalized.size();
  feature.values.reserve(feature_length(feature.n));
  for (const auto& p : normalized) {
    feature.values.push_back(p.x);
    feature.values.push_back(p.y);
  }
  feature.values.insert(feature.values.end(), distances.begin(), distances.end());
  return feature;
}

std::vector<LandmarkRecord> read_landmark_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file: " + path.string());
  std::vector<LandmarkRecord> out;
  std::string line;
  std::size_t line_no = 0;
  std::ostringstream errors;
  std::size_t error_count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    if (line_no == 1 && line.rfind("id,", 0) == 0) continue;
    auto fields = text::split(text::trim(line), ',');
    if (fields.size() != 1 + 2 * kLandmarkCount) {
      errors << "\n  line " << line_no << ": expected " << 1 + 2 * kLandmarkCount << " fields, got " << fields.size();
      ++error_count;
      continue;
    }
    std::vector<double> xy;
    bool ok = true;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto v = text::parse_double(fields[i]);
      if (!v) {
        errors << "\n  line " << line_no << ": bad coordinate '" << fields[i] << "'";
        ++error_count;
        ok = false;
        break;
      }
      xy.push_back(*v);
    }
    if (ok) out.push_back({std::string(text::trim(fields[0])), LandmarkSet::from_xy(xy)});
  }
  if (error_count) throw DataError(path.string() + ": " + std::to_string(error_count) + " malformed rows" + errors.str());
  return out;
}

void write_landmark_file(const std::filesystem::path& path, std::span<const LandmarkRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write landmark file: " + path.string());
  out << "id";
  for (std::size_t i = 1; i <= kLandmarkCount; ++i) out << ",x" << i << ",y" << i;
  out << '\n';
  for (const auto& r : records) {
    out << r.id;
    for (double v : r.landmarks.to_xy()) out << ',' << text::format_double(v);
    out << '\n';
  }
}

}  // namespace mga::geometry
