#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mga::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline constexpr std::size_t kLandmarkCount = 68;
inline constexpr int kNoseTip = 31;  // basis point for normalization

// 68-point face annotation in image pixel coordinates, 1-based indexing
// (jaw 1-17, brows 18-27, nose 28-36, eyes 37-48, mouth 49-68). "Right"
// means the subject's right, which is the image-left side of a frontal face.
class LandmarkSet {
 public:
  LandmarkSet() = default;
  explicit LandmarkSet(const std::array<Point, kLandmarkCount>& points);
  // Interleaved x1, y1, ..., x68, y68.
  static LandmarkSet from_xy(std::span<const double> xy);

  const Point& operator()(int one_based) const { return points_.at(static_cast<std::size_t>(one_based - 1)); }
  const std::array<Point, kLandmarkCount>& points() const { return points_; }
  std::vector<double> to_xy() const;

 private:
  std::array<Point, kLandmarkCount> points_{};
};

enum class Side { Left, Right };
const char* to_string(Side side);

// The landmark subset describing the subject's right half-face, ordered.
// Midline points (chin, nose ridge, nose base centre, lip centres) belong to
// both halves.
std::span<const int> right_half_indices();
// Index of the anatomically opposite landmark (1 <-> 17, 37 <-> 46, ...).
int mirror_index(int one_based);

Point right_eye_center(const LandmarkSet& landmarks);
Point left_eye_center(const LandmarkSet& landmarks);

LandmarkSet rotate(const LandmarkSet& landmarks, Point center, double radians);
LandmarkSet translate(const LandmarkSet& landmarks, double dx, double dy);
LandmarkSet scale(const LandmarkSet& landmarks, double factor);
// Horizontal mirror about x = axis_x with left/right labels swapped, i.e. the
// annotation a detector would produce on the flipped image.
LandmarkSet mirror(const LandmarkSet& landmarks, double axis_x = 0.0);

struct Alignment {
  LandmarkSet landmarks;
  double angle = 0.0;  // radians the input was rotated by
  Point center;        // midpoint of the eye centres
};

// Rotates about the eye midpoint so both eye centres share a y-coordinate,
// with the left eye at larger x. Throws GeometryError if the eye centres coincide.
Alignment align_rotation(const LandmarkSet& landmarks);

// Picks the half-face less foreshortened by yaw: the side whose eye centre
// lies farther (horizontally) from the nose tip. Ties go to Right.
Side select_side(const LandmarkSet& aligned);

// Right half-face points, in right_half_indices() order.
std::vector<Point> right_half(const LandmarkSet& landmarks);
// Left half-face reflected across the vertical line through the nose tip and
// re-indexed into the right-half ordering.
std::vector<Point> project_to_right(const LandmarkSet& landmarks);

// (x - nose.x) / sigma_x, (y - nose.y) / sigma_y with population standard
// deviations over `points`. Throws GeometryError if either sigma is zero.
std::vector<Point> normalize_half(std::span<const Point> points, Point nose);

// d(i, j) for i < j in lexicographic order.
std::vector<double> pairwise_distances(std::span<const Point> points);

inline constexpr std::size_t feature_length(std::size_t n) { return 2 * n + n * (n - 1) / 2; }

struct GeometricFeature {
  std::vector<double> values;  // x̄1, ȳ1, ..., x̄n, ȳn, d(1,2), ..., d(n-1,n)
  Side side = Side::Right;
  std::size_t n = 0;
};

struct GeometryOptions {
  // Divide half-face coordinates by the nose-bridge to inner-eye-corner
  // distance (landmarks 28 and 40 after projection) before normalizing.
  // The sigma normalization already removes scale, so this only changes
  // rounding; kept for parity with nose-eye scale normalization.
  bool nose_eye_prescale = false;
};

// align -> select side -> (project if left) -> normalize -> distances.
GeometricFeature build_feature(const LandmarkSet& landmarks, const GeometryOptions& options = {});

inline std::size_t default_feature_length() { return feature_length(right_half_indices().size()); }

// Landmark file: header "id,x1,y1,...,x68,y68", one record per line.
struct LandmarkRecord {
  std::string id;
  LandmarkSet landmarks;
};
std::vector<LandmarkRecord> read_landmark_file(const std::filesystem::path& path);
void write_landmark_file(const std::filesystem::path& path, std::span<const LandmarkRecord> records);

}  // namespace mga::geometry
