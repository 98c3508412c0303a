#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mga/core/adam.hpp"
#include "mga/core/autograd.hpp"
#include "mga/core/checkpoint.hpp"
#include "mga/core/gradcheck.hpp"
#include "mga/core/ops.hpp"
#include "mga/core/params.hpp"
#include "mga/errors.hpp"

using namespace mga;
using namespace mga::nn;
using doctest::Approx;

namespace {

Var leaf(Shape s, std::vector<double> v) { return Var::leaf(Tensor(std::move(s), std::move(v))); }

// Direct six-loop cross-correlation with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor out({n, k, oh, ow});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = b[f];
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long y = static_cast<long>(oy * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(ox * stride + v) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                s += w.at({f, ch, u, v}) * x.at({i, ch, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)});
              }
          out.at({i, f, oy, ox}) = s;
        }
  return out;
}

}  // namespace

TEST_CASE("tensor shape checks") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at({1, 2}) == 1.5);
  CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("conv2d hand examples") {
  SUBCASE("2x2 all-ones filter on [[1,2],[3,4]] gives 10") {
    auto y = conv2d(Var::constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})), Var::constant(Tensor({1, 1, 2, 2}, 1.0)),
                    Var::constant(Tensor({1}, 0.0)));
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value()[0] == 10.0);
  }
  SUBCASE("1x1 identity filter reproduces the input") {
    std::mt19937_64 rng(3);
    const Tensor x = testing::random_tensor({2, 1, 5, 4}, rng);
    auto y = conv2d(Var::constant(x), Var::constant(Tensor({1, 1, 1, 1}, 1.0)), Var::constant(Tensor({1}, 0.0)));
    CHECK(y.value().values().size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == x[i]);
  }
  SUBCASE("zero filters give zeros") {
    std::mt19937_64 rng(4);
    auto y = conv2d(Var::constant(testing::random_tensor({1, 2, 6, 6}, rng)), Var::constant(Tensor({3, 2, 3, 3})),
                    Var::constant(Tensor({3})));
    for (double v : y.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("kernel larger than padded input is rejected") {
    CHECK_THROWS_AS(conv2d(Var::constant(Tensor({1, 1, 2, 2})), Var::constant(Tensor({1, 1, 3, 3})),
                           Var::constant(Tensor({1}))),
                    DimensionError);
  }
}

TEST_CASE("conv2d matches a direct loop for strides and padding") {
  std::mt19937_64 rng(11);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 0}, {2, 2}, {1, 1}, {4, 0}}) {
    const Tensor x = testing::random_tensor({2, 3, 11, 9}, rng);
    const Tensor w = testing::random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = testing::random_tensor({4}, rng);
    const Tensor want = naive_conv(x, w, b, stride, pad);
    const Tensor got =
        conv2d(Var::constant(x), Var::constant(w), Var::constant(b), {stride, pad}).value();
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("batch norm hand examples") {
  Tensor mean({1}), var({1}), count({1});
  BatchNormStats stats{&mean, &var, &count};
  SUBCASE("values {1,3} normalize to {-1,1}") {
    auto y = batch_norm(leaf({2, 1}, {1, 3}), Var::constant(Tensor({1}, 1.0)), Var::constant(Tensor({1}, 0.0)), stats,
                        {BnMode::Train, 1e-12, 0.9});
    CHECK(y.value()[0] == Approx(-1.0).epsilon(1e-9));
    CHECK(y.value()[1] == Approx(1.0).epsilon(1e-9));
    CHECK(count[0] == 1.0);
    CHECK(mean[0] == 2.0);
  }
  SUBCASE("constant batch maps to zero") {
    auto y = batch_norm(leaf({3, 1}, {5, 5, 5}), Var::constant(Tensor({1}, 1.0)), Var::constant(Tensor({1}, 0.0)),
                        stats);
    for (double v : y.value().values()) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("infer without statistics is a state error") {
    CHECK_THROWS_AS(batch_norm(leaf({2, 1}, {1, 3}), Var::constant(Tensor({1}, 1.0)),
                               Var::constant(Tensor({1}, 0.0)), stats, {BnMode::Infer}),
                    StateError);
  }
}

TEST_CASE("global average pool and softmax hand examples") {
  CHECK(global_avg_pool(leaf({1, 1, 2, 2}, {1, 2, 3, 4})).value()[0] == 2.5);
  auto p = softmax(leaf({1, 2}, {std::log(1.0), std::log(3.0)})).value();
  CHECK(p[0] == Approx(0.25).epsilon(1e-12));
  CHECK(p[1] == Approx(0.75).epsilon(1e-12));
  auto sat = softmax(leaf({1, 2}, {0.0, 50.0})).value();
  CHECK(sat[1] == Approx(1.0).epsilon(1e-12));
  auto u = softmax(leaf({1, 4}, {2, 2, 2, 2})).value();
  for (double v : u.values()) CHECK(v == 0.25);
}

TEST_CASE("max pool routes the gradient to the first maximum") {
  auto x = leaf({1, 1, 2, 2}, {1, 4, 4, 2});
  auto y = max_pool2d(x, 2, 2);
  CHECK(y.value()[0] == 4.0);
  backward(global_avg_pool(y));
  const Tensor g = x.grad();
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("adam first steps follow the hand trace") {
  ParameterStore p;
  p.add("w", Tensor({1}, 0.0));
  AdamState st(AdamConfig{0.01, 0.0});
  const std::map<std::string, Tensor> g{{"w", Tensor({1}, 1.0)}};
  adam_step(p, st, g);
  CHECK(p.get("w").value()[0] == Approx(-0.01).epsilon(1e-6));
  // Step 2 by hand: m = 0.19, v = 0.001999; m̂ = 1, v̂ = 1.
  double m = 0.1, v = 0.001, w = -0.01 * 1.0 / (1.0 + 1e-8);
  m = 0.9 * m + 0.1;
  v = 0.999 * v + 0.001;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  adam_step(p, st, g);
  CHECK(p.get("w").value()[0] == Approx(w).epsilon(1e-12));

  ParameterStore q;
  q.add("w", Tensor({2}, 3.0));
  AdamState s2;
  adam_step(q, s2, {{"w", Tensor({2}, 0.0)}});
  CHECK(q.get("w").value()[0] == 3.0);
}

TEST_CASE("adam skips frozen parameters bit-exactly") {
  ParameterStore p;
  p.add("a", Tensor({2}, 1.0));
  p.add("b", Tensor({2}, 1.0));
  p.freeze("a");
  AdamState st;
  adam_step(p, st, {{"a", Tensor({2}, 1.0)}, {"b", Tensor({2}, 1.0)}});
  CHECK(p.get("a").value()[0] == 1.0);
  CHECK(p.get("b").value()[0] != 1.0);
  CHECK_THROWS_AS(adam_step(p, st, {{"zzz", Tensor({2}, 1.0)}}), StateError);
}

TEST_CASE("gradcheck: linear layer is exact and a scaled gradient is caught") {
  std::mt19937_64 rng(5);
  Var x = Var::constant(testing::random_tensor({3, 4}, rng));
  Var w = Var::leaf(testing::random_tensor({2, 4}, rng));
  Var b = Var::leaf(testing::random_tensor({2}, rng));
  auto lin = [&] {
    const Var y = linear(x, w, b);
    return weighted_sum({{1.0, cross_entropy(softmax(y), std::vector<int>{0, 1, 1})}});
  };
  auto ok = finite_difference_check({{"w", w}, {"b", b}}, lin);
  CHECK(ok.max_relative_error < 1e-7);

  auto doubled = [&] {
    const Var y = linear(x, w, b);
    const Var l = cross_entropy(softmax(y), std::vector<int>{0, 1, 1});
    // Same value, twice the gradient.
    return make_op(l.value(), {l}, [](Node& self) {
      Tensor& d = self.parents[0]->ensure_grad();
      d[0] += 2.0 * self.grad[0];
    });
  };
  auto bad = finite_difference_check({{"w", w}, {"b", b}}, doubled);
  CHECK(bad.max_relative_error > 1e-2);
}

TEST_CASE("no-grad guard records no tape") {
  Var w = Var::leaf(Tensor({1}, 2.0));
  {
    const NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Var y = affine(w, 3.0, 0.0);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
  Var y = affine(w, 3.0, 0.0);
  backward(y);
  CHECK(w.grad()[0] == 3.0);
}

TEST_CASE("checkpoint round trip is bit-exact and rejects corruption") {
  ParameterStore p;
  p.add("a.weight", Tensor({2, 2}, {0.1, -1e-300, 3.0, 1.0 / 3.0}));
  p.add_buffer("a.mean", Tensor({2}, {5.0, 6.0}));
  p.freeze("a.weight");
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string bytes = ss.str();
  std::stringstream in(bytes);
  ParameterStore q = read_checkpoint(in);
  CHECK(q.get("a.weight").value().values()[1] == -1e-300);
  CHECK(q.get("a.weight").value()[3] == 1.0 / 3.0);
  CHECK(q.buffer("a.mean")[1] == 6.0);
  CHECK(q.is_frozen("a.weight"));
  std::stringstream again;
  write_checkpoint(again, q);
  CHECK(again.str() == bytes);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), StateError);
}
