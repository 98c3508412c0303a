#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mga/core/autograd.hpp"
#include "mga/errors.hpp"
#include "mga/losses.hpp"
#include "mga/models.hpp"

using namespace mga;
using namespace mga::models;
using doctest::Approx;
using nn::Tensor;
using nn::Var;

namespace {

ArchConfig tiny() {
  ArchConfig a = ArchConfig::desk();
  a.can.image_size = 32;
  a.can.in_channels = 1;
  a.dgn.hidden = {5, 4};
  return a;
}

// Sets every running statistic so inference mode is usable.
void calibrate(nn::ParameterStore& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (const auto& name : s.buffer_names()) {
    Tensor& b = s.buffer(name);
    if (name.ends_with(".updates")) b[0] = 1.0;
    if (name.ends_with(".running_var")) for (auto& v : b.values()) v = u(rng);
    if (name.ends_with(".running_mean")) for (auto& v : b.values()) v = u(rng) - 1.0;
  }
}

// Dense matrix trace of the DGN in inference mode.
std::pair<std::vector<double>, std::vector<double>> scripted_dgn(nn::ParameterStore& s, const ArchConfig& a,
                                                                 const std::vector<double>& x) {
  auto dense = [&](const std::string& p, const std::vector<double>& in) {
    const Tensor& w = s.get(p + ".weight").value();
    const Tensor& b = s.get(p + ".bias").value();
    std::vector<double> out(w.dim(0));
    for (std::size_t o = 0; o < w.dim(0); ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < w.dim(1); ++i) acc += w[o * w.dim(1) + i] * in[i];
      out[o] = acc;
    }
    return out;
  };
  auto bn_relu = [&](const std::string& p, std::vector<double> v) {
    for (std::size_t c = 0; c < v.size(); ++c) {
      const double z = (v[c] - s.buffer(p + ".running_mean")[c]) / std::sqrt(s.buffer(p + ".running_var")[c] + a.bn_eps);
      v[c] = std::max(0.0, s.get(p + ".gamma").value()[c] * z + s.get(p + ".beta").value()[c]);
    }
    return v;
  };
  auto soft = [](std::vector<double> z) {
    double m = *std::max_element(z.begin(), z.end()), t = 0;
    for (auto& v : z) t += (v = std::exp(v - m));
    for (auto& v : z) v /= t;
    return z;
  };
  const auto h2 = bn_relu("dgn.bn2", dense("dgn.fc2", bn_relu("dgn.bn1", dense("dgn.fc1", x))));
  return {soft(dense("dgn.gender", h2)), soft(dense("dgn.group", h2))};
}

}  // namespace

TEST_CASE("shape traces for both presets") {
  const auto ref = can_shape_trace(ArchConfig::reference().can);
  CHECK(ref.front().second == nn::Shape{3, 227, 227});
  CHECK(ref.back().second == nn::Shape{384});
  const auto desk = can_shape_trace(ArchConfig::desk().can);
  CHECK(desk.back().second == nn::Shape{ArchConfig::desk().can_feature_dim()});
  ArchConfig r = ArchConfig::reference();
  CHECK(r.dgn_feature_dim() + r.can_feature_dim() == 448);
  ArchConfig bad = ArchConfig::desk();
  bad.can.image_size = 8;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("heads on a batch: shapes, order and normalization") {
  const ArchConfig a = tiny();
  auto store = make_full_store(a, 3);
  std::mt19937_64 rng(9);
  calibrate(store, rng);
  const std::size_t n = 4;
  const Tensor imgs = testing::random_tensor({n, 1, 32, 32}, rng, 0, 1);
  const Tensor geo = testing::random_tensor({n, a.dgn_input_dim()}, rng);
  const auto out = MgaModel(a).forward(store, Var::constant(imgs), Var::constant(geo), Mode::Infer);
  REQUIRE(out.fused_gender.shape() == nn::Shape{n, 2});
  CHECK(out.trunk.age.value().size() == n);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(out.fused_gender.value()[2 * i] + out.fused_gender.value()[2 * i + 1] == Approx(1.0).epsilon(1e-12));
  }
  // Sample 2 alone gives the same answer as inside the batch.
  Tensor one({1, 1, 32, 32});
  std::copy(imgs.data() + 2 * 1024, imgs.data() + 3 * 1024, one.data());
  Tensor g1({1, a.dgn_input_dim()});
  std::copy(geo.data() + 2 * a.dgn_input_dim(), geo.data() + 3 * a.dgn_input_dim(), g1.data());
  const auto single = MgaModel(a).forward(store, Var::constant(one), Var::constant(g1), Mode::Infer);
  CHECK(single.fused_gender.value()[1] == Approx(out.fused_gender.value()[5]).epsilon(1e-12));
}

TEST_CASE("DGN forward matches the scripted matrix trace") {
  const ArchConfig a = tiny();
  auto store = make_full_store(a, 4);
  std::mt19937_64 rng(10);
  calibrate(store, rng);
  const Tensor geo = testing::random_tensor({3, a.dgn_input_dim()}, rng);
  const auto out = DgnModel(a).forward(store, Var::constant(geo), Mode::Infer);
  CHECK(out.hidden2.shape() == nn::Shape{3, 4});
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> x(geo.data() + i * geo.dim(1), geo.data() + (i + 1) * geo.dim(1));
    const auto [g, f] = scripted_dgn(store, a, x);
    CHECK(out.gender_probs.value()[2 * i + 1] == Approx(g[1]).epsilon(1e-12));
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(out.group_probs.value()[i * f.size() + k] == Approx(f[k]).epsilon(1e-12));
  }
}

TEST_CASE("integrated head without its DGN weights depends on CAN features only") {
  const ArchConfig a = tiny();
  auto store = make_full_store(a, 5);
  std::mt19937_64 rng(11);
  calibrate(store, rng);
  Tensor& w = store.get("in.gender.weight").mutable_value();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < a.dgn_feature_dim(); ++c) w[r * w.dim(1) + c] = 0.0;
  const Tensor imgs = testing::random_tensor({2, 1, 32, 32}, rng, 0, 1);
  const IntegratedModel in(a);
  const auto p1 = in.forward(store, Var::constant(imgs), Var::constant(testing::random_tensor({2, a.dgn_input_dim()}, rng)), Mode::Infer);
  const auto p2 = in.forward(store, Var::constant(imgs), Var::constant(testing::random_tensor({2, a.dgn_input_dim()}, rng)), Mode::Infer);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p1.gender_probs.value()[i] == Approx(p2.gender_probs.value()[i]).epsilon(1e-12));
}

TEST_CASE("equal experts make the gate irrelevant") {
  const ArchConfig a = tiny();
  auto store = make_full_store(a, 6);
  std::mt19937_64 rng(12);
  calibrate(store, rng);
  for (Expert e : kExperts) {
    store.get(expert_prefix(e) + ".weight").mutable_value() = store.get("expert.young.weight").value();
    store.get(expert_prefix(e) + ".bias").mutable_value() = store.get("expert.young.bias").value();
  }
  const auto out = MgaModel(a).forward(store, Var::constant(testing::random_tensor({3, 1, 32, 32}, rng, 0, 1)),
                                       Var::constant(testing::random_tensor({3, a.dgn_input_dim()}, rng)), Mode::Infer);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(out.fused_gender.value()[i] == Approx(out.expert_probs[1].value()[i]).epsilon(1e-12));
  }
}

TEST_CASE("fuse_experts hand examples and contract") {
  using P = std::array<double, 2>;
  const std::vector<P> ex{{0.9, 0.1}, {0.6, 0.4}, {0.2, 0.8}};
  auto f = fuse_experts(std::vector<double>{0.5, 0.3, 0.2}, ex);
  CHECK(f[0] == Approx(0.67).epsilon(1e-12));
  CHECK(f[1] == Approx(0.33).epsilon(1e-12));
  f = fuse_experts(std::vector<double>{1, 0, 0}, ex);
  CHECK(f[0] == 0.9);
  const std::vector<P> half(3, P{0.5, 0.5});
  f = fuse_experts(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, half);
  CHECK(f[0] == Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(fuse_experts(std::vector<double>{0.5, 0.6, 0.2}, ex), ContractError);
  CHECK_THROWS_AS(fuse_experts(std::vector<double>{-0.1, 0.6, 0.5}, ex), ContractError);
}

TEST_CASE("parameter budget of the reference configuration") {
  const auto ref = ArchConfig::reference();
  const std::size_t total = mga_parameter_count(ref);
  CHECK(total <= 2'500'000);
  // Conv weights alone: 96·3·49 + 256·96·25 + 384·256·9.
  CHECK(total > 96 * 3 * 49 + 256 * 96 * 25 + 384 * 256 * 9);
}

TEST_CASE("losses: hand examples") {
  auto probs = [](std::vector<double> v) {
    const std::size_t n = v.size() / 2;
    return Var::constant(Tensor({n, 2}, std::move(v)));
  };
  CHECK(loss::mae_loss(Var::constant(Tensor({2, 1}, {22, 27})), std::vector<double>{20, 30}).value()[0] == 2.5);
  CHECK(loss::mae_loss(Var::constant(Tensor({2, 1}, {25, 35})), std::vector<double>{20, 30}).value()[0] == 5.0);
  CHECK(loss::gender_ce(probs({1, 0}), std::vector<int>{0}).value()[0] == 0.0);
  CHECK(loss::gender_ce(probs({0.5, 0.5}), std::vector<int>{1}).value()[0] == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss::gender_ce(probs({0.9, 0.1, 0.2, 0.8}), std::vector<int>{0, 1}).value()[0] ==
        Approx(-(std::log(0.9) + std::log(0.8)) / 2).epsilon(1e-12));
  CHECK(loss::gender_ce(probs({0.9, 0.1, 0.2, 0.8}), std::vector<double>{1, 0, 0, 1}).value()[0] ==
        Approx(-(std::log(0.9) + std::log(0.8)) / 2).epsilon(1e-12));
  CHECK_THROWS_AS(loss::gender_ce(probs({0.5, 0.5}), std::vector<double>{0.5, 0.5}), ContractError);
  const Var g8 = Var::constant(Tensor({1, 8}, 0.125));
  CHECK(loss::group_ce(g8, std::vector<int>{3}).value()[0] == Approx(std::log(8.0)).epsilon(1e-12));
  const Var g3 = Var::constant(Tensor({2, 3}, {0.2, 0.5, 0.3, 0.6, 0.3, 0.1}));
  CHECK(loss::group_ce(g3, std::vector<int>{1, 0}).value()[0] ==
        Approx(-(std::log(0.5) + std::log(0.6)) / 2).epsilon(1e-12));
  CHECK_THROWS(loss::mae_loss(Var::constant(Tensor({2, 1})), std::vector<double>{1.0}));
}

TEST_CASE("composite losses weight their parts") {
  auto scalar = [](double v) { return Var::constant(Tensor::scalar(v)); };
  loss::LossParts parts{scalar(3.0), scalar(0.5), scalar(2.0)};
  CHECK(loss::composite_loss(loss::LossKind::Fusion, parts, {1, 1, 0.1, 0.1}).value()[0] == 5.5);
  CHECK(loss::composite_loss(loss::LossKind::Fusion, parts, {0, 0, 0.1, 0.1}).value()[0] == 0.5);
  CHECK(loss::composite_loss(loss::LossKind::Mga, parts, {1, 1, 0.1, 0.1}).value()[0] == Approx(0.5 + 0.3 + 0.2));
  CHECK(loss::composite_loss(loss::LossKind::Can, {scalar(3.0), scalar(0.5), {}}, {}).value()[0] == 3.5);
  CHECK(loss::composite_loss(loss::LossKind::Dgn, {{}, scalar(0.5), scalar(2.0)}, {}).value()[0] == 2.5);
  CHECK_THROWS(loss::composite_loss(loss::LossKind::Can, {{}, scalar(0.5), {}}, {}));

  // A two-sample MGA batch built from probabilities, ages and groups.
  const Var fused = Var::constant(Tensor({2, 2}, {0.7, 0.3, 0.4, 0.6}));
  const Var age = Var::constant(Tensor({2, 1}, {18, 61}));
  const Var grp = Var::constant(Tensor({2, 3}, {0.8, 0.1, 0.1, 0.1, 0.2, 0.7}));
  loss::LossParts mp{loss::mae_loss(age, std::vector<double>{15, 64}), loss::gender_ce(fused, std::vector<int>{0, 1}),
                     loss::group_ce(grp, std::vector<int>{0, 2})};
  const double want = -(std::log(0.7) + std::log(0.6)) / 2 + 0.1 * 3.0 - 0.1 * (std::log(0.8) + std::log(0.7)) / 2;
  CHECK(loss::composite_loss(loss::LossKind::Mga, mp, {1, 1, 0.1, 0.1}).value()[0] == Approx(want).epsilon(1e-12));
}
