#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "mga/core/tensor.hpp"
#include "mga/eval.hpp"
#include "mga/geometry.hpp"

namespace testing {

inline mga::nn::Tensor random_tensor(mga::nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  mga::nn::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// A plausible frontal 68-point face in pixels, mirror-symmetric about x = cx
// unless `jitter` is non-zero.
inline mga::geometry::LandmarkSet face(std::mt19937_64& rng, double jitter = 0.0, double cx = 100.0,
                                       double cy = 100.0, double s = 40.0) {
  using mga::geometry::Point;
  std::array<Point, 68> p{};
  // Right half (subject's right = image left) template in face units.
  auto put = [&](int i, double x, double y) { p[static_cast<std::size_t>(i - 1)] = {x, y}; };
  for (int i = 1; i <= 8; ++i) {
    const double t = (i - 1) / 8.0;
    put(i, -1.0 + 0.35 * t * t, -0.3 + 1.4 * t);
  }
  put(9, 0.0, 1.15);
  for (int i = 18; i <= 22; ++i) put(i, -0.85 + 0.15 * (i - 18), -0.65 - 0.05 * std::sin((i - 18) * 0.7));
  put(28, 0.0, -0.45);
  put(29, 0.0, -0.3);
  put(30, 0.0, -0.15);
  put(31, 0.0, 0.0);
  put(32, -0.2, 0.12);
  put(33, -0.1, 0.15);
  put(34, 0.0, 0.17);
  const double ey = -0.42;
  put(37, -0.7, ey);
  put(38, -0.6, ey - 0.06);
  put(39, -0.45, ey - 0.06);
  put(40, -0.3, ey);
  put(41, -0.45, ey + 0.05);
  put(42, -0.6, ey + 0.05);
  put(49, -0.4, 0.5);
  put(50, -0.28, 0.43);
  put(51, -0.12, 0.4);
  put(52, 0.0, 0.42);
  put(58, 0.0, 0.62);
  put(59, -0.15, 0.6);
  put(60, -0.3, 0.56);
  put(61, -0.33, 0.5);
  put(62, -0.12, 0.47);
  put(63, 0.0, 0.48);
  put(67, 0.0, 0.53);
  put(68, -0.12, 0.52);
  for (int i = 1; i <= 68; ++i) {
    const int m = mga::geometry::mirror_index(i);
    if (m != i && p[static_cast<std::size_t>(i - 1)].x < 0.0) {
      p[static_cast<std::size_t>(m - 1)] = {-p[static_cast<std::size_t>(i - 1)].x, p[static_cast<std::size_t>(i - 1)].y};
    }
  }
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& q : p) {
    q.x = cx + s * (q.x + jitter * n(rng));
    q.y = cy + s * (q.y + jitter * n(rng));
  }
  return mga::geometry::LandmarkSet(p);
}

// Metrics by direct counting, written without the library's helpers.
// Coarse groups split at 20 and 50; fine groups are decades capped at 7.
struct Brute {
  double acc, mae, exact, one_off;
  std::array<double, 3> group_acc;
};

inline Brute brute_metrics(const std::vector<mga::models::Prediction>& p, const std::vector<mga::eval::Truth>& t) {
  auto coarse = [](double a) { return a < 20 ? 0 : (a < 50 ? 1 : 2); };
  auto decade = [](double a) { return std::min(7, static_cast<int>(a / 10)); };
  Brute b{};
  std::array<double, 3> hit{}, cnt{};
  double ok = 0, ex = 0, off = 0, err = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int label = p[i].gender[1] > p[i].gender[0] ? 1 : 0;
    const int g = coarse(t[i].age);
    cnt[g] += 1;
    if (label == t[i].gender) {
      ok += 1;
      hit[g] += 1;
    }
    err += std::abs(*p[i].age - t[i].age);
    int pf;
    if (!p[i].fine_group.empty()) {
      pf = 0;
      for (int k = 1; k < 8; ++k) if (p[i].fine_group[k] > p[i].fine_group[pf]) pf = k;
    } else {
      pf = decade(std::max(0.0, *p[i].age));
    }
    const int tf = decade(t[i].age);
    if (pf == tf) ex += 1;
    if (std::abs(pf - tf) <= 1) off += 1;
  }
  const double n = static_cast<double>(p.size());
  b.acc = 100 * ok / n;
  b.mae = err / n;
  b.exact = 100 * ex / n;
  b.one_off = 100 * off / n;
  for (int g = 0; g < 3; ++g) b.group_acc[g] = cnt[g] > 0 ? 100 * hit[g] / cnt[g] : -1;
  return b;
}

}  // namespace testing
