#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mga/errors.hpp"
#include "mga/geometry.hpp"

using namespace mga;
using namespace mga::geometry;
using doctest::Approx;

namespace {

// Straight-line re-derivation of the feature: level the eyes, keep the less
// foreshortened half, reflect it to the right if needed, standardize about
// the nose tip, append pairwise distances.
std::vector<double> scripted_feature(const LandmarkSet& in) {
  auto eye = [&](int a) {
    Point c{0, 0};
    for (int i = a; i < a + 6; ++i) {
      c.x += in(i).x / 6;
      c.y += in(i).y / 6;
    }
    return c;
  };
  const Point r = eye(37), l = eye(43);
  const Point mid{(r.x + l.x) / 2, (r.y + l.y) / 2};
  const double th = -std::atan2(l.y - r.y, l.x - r.x);
  std::array<Point, 68> a{};
  for (int i = 1; i <= 68; ++i) {
    const double dx = in(i).x - mid.x, dy = in(i).y - mid.y;
    a[i - 1] = {mid.x + std::cos(th) * dx - std::sin(th) * dy, mid.y + std::sin(th) * dx + std::cos(th) * dy};
  }
  auto mean_x = [&](int s) {
    double v = 0;
    for (int i = s; i < s + 6; ++i) v += a[i - 1].x / 6;
    return v;
  };
  const Point nose = a[30];
  const bool left = std::abs(mean_x(43) - nose.x) > std::abs(nose.x - mean_x(37));
  std::vector<Point> pts;
  for (int idx : right_half_indices()) {
    if (left) {
      const Point q = a[mirror_index(idx) - 1];
      pts.push_back({2 * nose.x - q.x, q.y});
    } else {
      pts.push_back(a[idx - 1]);
    }
  }
  double mx = 0, my = 0;
  for (auto& p : pts) {
    mx += p.x / pts.size();
    my += p.y / pts.size();
  }
  double sx = 0, sy = 0;
  for (auto& p : pts) {
    sx += (p.x - mx) * (p.x - mx) / pts.size();
    sy += (p.y - my) * (p.y - my) / pts.size();
  }
  sx = std::sqrt(sx);
  sy = std::sqrt(sy);
  std::vector<double> out;
  std::vector<Point> z;
  for (auto& p : pts) {
    z.push_back({(p.x - nose.x) / sx, (p.y - nose.y) / sy});
    out.push_back(z.back().x);
    out.push_back(z.back().y);
  }
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = i + 1; j < z.size(); ++j) out.push_back(std::hypot(z[i].x - z[j].x, z[i].y - z[j].y));
  return out;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= tol);
}

}  // namespace

TEST_CASE("mirror index is an involution with fixed midline points") {
  for (int i = 1; i <= 68; ++i) CHECK(mirror_index(mirror_index(i)) == i);
  CHECK(mirror_index(1) == 17);
  CHECK(mirror_index(37) == 46);
  CHECK(mirror_index(31) == 31);
  CHECK(mirror_index(9) == 9);
  CHECK_THROWS_AS(mirror_index(0), GeometryError);
}

TEST_CASE("alignment") {
  std::mt19937_64 rng(1);
  SUBCASE("level eyes are left alone") {
    const auto f = testing::face(rng);
    const auto al = align_rotation(f);
    CHECK(al.angle == Approx(0.0).epsilon(1e-15));
    for (int i = 1; i <= 68; ++i) CHECK(al.landmarks(i).x == Approx(f(i).x).epsilon(1e-12));
  }
  SUBCASE("tilted eyes end up level") {
    const auto f = rotate(testing::face(rng), {90, 80}, std::numbers::pi / 4);
    const auto al = align_rotation(f);
    CHECK(right_eye_center(al.landmarks).y == Approx(left_eye_center(al.landmarks).y).epsilon(1e-12));
    CHECK(left_eye_center(al.landmarks).x > right_eye_center(al.landmarks).x);
  }
  SUBCASE("two-point rotation matches the rotation matrix") {
    std::array<Point, 68> p{};
    p[0] = {0, 0};
    p[1] = {1, 1};
    const auto r = rotate(LandmarkSet(p), {0.5, 0.5}, -std::numbers::pi / 4);
    const double h = std::sqrt(2.0) / 2;
    CHECK(r(1).x == Approx(0.5 - h).epsilon(1e-12));
    CHECK(r(1).y == Approx(0.5).epsilon(1e-12));
    CHECK(r(2).x == Approx(0.5 + h).epsilon(1e-12));
  }
}

TEST_CASE("side selection and projection") {
  std::mt19937_64 rng(2);
  const auto sym = testing::face(rng);
  CHECK(select_side(sym) == Side::Right);

  // Turn the head so the left half is foreshortened: compress x on the left.
  std::array<Point, 68> p = sym.points();
  const double nx = sym(kNoseTip).x;
  for (auto& q : p) {
    if (q.x > nx) q.x = nx + 0.7 * (q.x - nx);
  }
  const LandmarkSet turned(p);
  CHECK(select_side(turned) == Side::Right);
  CHECK(select_side(mirror(turned, 100.0)) == Side::Left);

  const auto right = right_half(sym);
  const auto projected = project_to_right(sym);
  REQUIRE(right.size() == projected.size());
  for (std::size_t i = 0; i < right.size(); ++i) {
    CHECK(projected[i].x == Approx(right[i].x).epsilon(1e-9));
    CHECK(projected[i].y == Approx(right[i].y).epsilon(1e-9));
  }
}

TEST_CASE("normalization and distances") {
  std::vector<Point> pts{{1, 2}, {3, 5}, {0, 0}, {4, 1}};
  const Point nose{1, 2};
  const auto z = normalize_half(pts, nose);
  CHECK(z[0].x == 0.0);
  CHECK(z[0].y == 0.0);
  std::vector<Point> moved, scaled;
  for (auto& q : pts) {
    moved.push_back({q.x + 7, q.y - 3});
    scaled.push_back({q.x * 2.5, q.y * 2.5});
  }
  const auto zm = normalize_half(moved, {8, -1});
  const auto zs = normalize_half(scaled, {2.5, 5});
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(zm[i].x == Approx(z[i].x).epsilon(1e-12));
    CHECK(zs[i].y == Approx(z[i].y).epsilon(1e-12));
  }
  std::vector<Point> same{{1, 1}, {1, 1}};
  CHECK_THROWS_AS(normalize_half(same, {1, 1}), GeometryError);

  std::vector<Point> tri{{0, 0}, {3, 4}};
  CHECK(pairwise_distances(tri) == std::vector<double>{5.0});
  CHECK(pairwise_distances(std::vector<Point>{{1, 1}, {1, 1}})[0] == 0.0);
  CHECK(pairwise_distances(pts).size() == 6);
  CHECK(feature_length(3) == 9);
}

TEST_CASE("build_feature matches the scripted trace") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto f = testing::face(rng, 0.03);
    f = rotate(f, {100, 100}, (t - 10) * 0.05);
    const auto got = build_feature(f);
    CHECK(got.values.size() == default_feature_length());
    check_close(got.values, scripted_feature(f), 1e-9);
  }
}

TEST_CASE("build_feature invariances") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 50; ++t) {
    const auto f = testing::face(rng, 0.05);
    const auto base = build_feature(f).values;
    check_close(build_feature(translate(f, 30 * u(rng), 30 * u(rng))).values, base, 1e-9);
    check_close(build_feature(scale(f, 2.0 + u(rng))).values, base, 1e-9);
    check_close(build_feature(rotate(f, {u(rng) * 50, u(rng) * 50}, 3 * u(rng))).values, base, 1e-9);
    check_close(build_feature(mirror(f, 20 * u(rng))).values, base, 1e-9);
  }
}

TEST_CASE("landmark file round trip") {
  std::mt19937_64 rng(5);
  const auto dir = std::filesystem::temp_directory_path() / "mga_geo_test";
  std::filesystem::create_directories(dir);
  std::vector<LandmarkRecord> recs{{"a", testing::face(rng, 0.1)}, {"b", testing::face(rng, 0.1)}};
  write_landmark_file(dir / "lm.csv", recs);
  const auto back = read_landmark_file(dir / "lm.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].id == "b");
  CHECK(back[1].landmarks.to_xy() == recs[1].landmarks.to_xy());
  std::filesystem::remove_all(dir);
}
