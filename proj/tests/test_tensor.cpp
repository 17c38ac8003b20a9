#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "ssgrl/rng.hpp"
#include "ssgrl/tensor.hpp"

using namespace ssgrl;

namespace {

TensorPtr random_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& x : t->data) x = rng.uniform(-1.0, 1.0);
  return t;
}

// Reduces an arbitrary op output to a scalar with fixed random weights so
// every output entry receives a distinct adjoint.
TensorPtr weighted_sum(ComputeGraph& g, const TensorPtr& t, Rng& rng) {
  auto w = Tensor::zeros(t->shape);
  for (auto& x : w->data) x = rng.uniform(-1.0, 1.0);
  return g.sum(g.mul(t, w));
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  ComputeGraph g;
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = g.matmul(Tensor::eye(2), m);
  CHECK(out->data == std::vector<double>{1, 2, 3, 4});

  auto proj = Tensor::from({2, 2}, {1, 0, 0, 0});
  auto v = Tensor::from({2, 1}, {5, 7});
  auto out2 = g.matmul(proj, v);
  CHECK(out2->data == std::vector<double>{5, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  ComputeGraph g;
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(g.matmul(a, b),
                       doctest::Contains("[2x3]"), DimError);
}

TEST_CASE("matmul gradient of sum vs central differences") {
  Rng rng(42);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  auto report = grad_check(
      [&](ComputeGraph& g) { return g.sum(g.matmul(a, b)); },
      {{"a", a}, {"b", b}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("elementwise fixed points") {
  ComputeGraph g;
  CHECK(g.sigmoid(Tensor::scalar(0.0))->data[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.tanh(Tensor::scalar(0.0))->data[0] == 0.0);
}

TEST_CASE("elementwise mul gradient vs central differences") {
  Rng rng(7);
  auto a = random_tensor(rng, {2, 3});
  auto b = random_tensor(rng, {2, 3});
  auto report = grad_check(
      [&](ComputeGraph& g) { return g.sum(g.mul(a, b)); },
      {{"a", a}, {"b", b}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("elementwise binary rejects mismatched shapes") {
  ComputeGraph g;
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(g.add(a, b), DimError);
  CHECK_THROWS_AS(g.elementwise(EwOp::sub, a, b), DimError);
}

TEST_CASE("elementwise scalar broadcast") {
  ComputeGraph g;
  auto a = Tensor::from({1, 3}, {1, 2, 3});
  auto out = g.add(a, Tensor::scalar(10.0));
  CHECK(out->data == std::vector<double>{11, 12, 13});
  auto out2 = g.mul(Tensor::scalar(2.0), a);
  CHECK(out2->data == std::vector<double>{2, 4, 6});
}

TEST_CASE("softmax equal inputs and forced split") {
  ComputeGraph g;
  auto c = Tensor::from({1, 4}, {3.7, 3.7, 3.7, 3.7});
  auto out = g.softmax(c, 1);
  for (double x : out->data) CHECK(x == doctest::Approx(0.25).epsilon(1e-14));

  auto v = Tensor::from({2, 1}, {0.0, std::log(3.0)});
  auto out2 = g.softmax(v, 0);
  CHECK(out2->data[0] == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(out2->data[1] == doctest::Approx(0.75).epsilon(1e-13));
}

TEST_CASE("softmax shift invariance") {
  Rng rng(3);
  ComputeGraph g;
  auto x = random_tensor(rng, {5, 1}, false);
  auto shifted = Tensor::zeros({5, 1});
  for (std::size_t i = 0; i < 5; ++i) shifted->data[i] = x->data[i] + 10.0;
  auto a = g.softmax(x, 0);
  auto b = g.softmax(shifted, 0);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(std::abs(a->data[i] - b->data[i]) < 1e-12);
}

TEST_CASE("softmax outputs sum to one and stay in (0,1)") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    ComputeGraph g;
    auto x = random_tensor(rng, {4, 3}, false);
    for (auto& v : x->data) v *= 5.0;
    const int axis = trial % 2;
    auto y = g.softmax(x, axis);
    const int lanes = axis == 0 ? 3 : 4;
    for (int lane = 0; lane < lanes; ++lane) {
      double s = 0.0;
      for (int e = 0; e < (axis == 0 ? 4 : 3); ++e) {
        const double v = axis == 0 ? y->at(e, lane) : y->at(lane, e);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax rejects non-finite input") {
  ComputeGraph g;
  auto x = Tensor::from({1, 2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(g.softmax(x, 1), NumericError);
}

TEST_CASE("concat basics") {
  ComputeGraph g;
  auto a = Tensor::from({2}, {1, 2});
  auto b = Tensor::from({1}, {3});
  auto out = g.concat(a, b, 0);
  CHECK(out->data == std::vector<double>{1, 2, 3});

  auto empty = Tensor::zeros({0});
  auto out2 = g.concat(a, empty, 0);
  CHECK(out2->data == a->data);

  auto c = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(g.concat(a, c, 0), DimError);
}

TEST_CASE("gradient of sum of concat splits all-ones") {
  auto a = Tensor::from({1, 2}, {1, 2}, true);
  auto b = Tensor::from({1, 3}, {3, 4, 5}, true);
  ComputeGraph g;
  auto loss = g.sum(g.concat(a, b, 1));
  g.backward(loss);
  CHECK(a->grad == std::vector<double>{1, 1});
  CHECK(b->grad == std::vector<double>{1, 1, 1});
}

TEST_CASE("grad_check on a quadratic") {
  auto theta = Tensor::scalar(3.0, true);
  auto report = grad_check(
      [&](ComputeGraph& g) { return g.sum(g.mul(theta, theta)); },
      {{"theta", theta}});
  CHECK(report.max_rel_err < 1e-9);
  CHECK(theta->grad[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad_check flags a deliberately wrong backward rule") {
  Rng rng(5);
  auto x = random_tensor(rng, {2, 2});
  set_tanh_backward_fault(true);
  auto report = grad_check(
      [&](ComputeGraph& g) { return g.sum(g.tanh(x)); }, {{"x", x}});
  set_tanh_backward_fault(false);
  CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("grad_check rejects non-finite loss") {
  auto x = Tensor::scalar(1.0, true);
  CHECK_THROWS_AS(
      grad_check([&](ComputeGraph& g) {
        return g.sum(g.scale(x, std::numeric_limits<double>::infinity()));
      }, {{"x", x}}),
      NumericError);
}

TEST_CASE("every primitive passes grad_check on random shapes") {
  Rng rng(2024);
  auto check = [&](const char* what, auto&& fn, const NamedParams& params) {
    auto report = grad_check(fn, params);
    INFO(what << " worst entry " << report.worst_param << "["
              << report.worst_index << "]");
    CHECK(report.max_rel_err < 1e-6);
  };

  {
    auto a = random_tensor(rng, {3, 2});
    auto b = random_tensor(rng, {2, 4});
    check("matmul", [&](ComputeGraph& g) {
      Rng w(1); return weighted_sum(g, g.matmul(a, b), w);
    }, {{"a", a}, {"b", b}});
  }
  {
    auto a = random_tensor(rng, {2, 3});
    auto b = random_tensor(rng, {2, 3});
    check("add", [&](ComputeGraph& g) {
      Rng w(2); return weighted_sum(g, g.add(a, b), w);
    }, {{"a", a}, {"b", b}});
    check("sub", [&](ComputeGraph& g) {
      Rng w(3); return weighted_sum(g, g.sub(a, b), w);
    }, {{"a", a}, {"b", b}});
    check("mul", [&](ComputeGraph& g) {
      Rng w(4); return weighted_sum(g, g.mul(a, b), w);
    }, {{"a", a}, {"b", b}});
  }
  {
    auto a = random_tensor(rng, {2, 3});
    auto s = Tensor::scalar(rng.uniform(-1.0, 1.0), true);
    check("scalar broadcast mul", [&](ComputeGraph& g) {
      Rng w(5); return weighted_sum(g, g.mul(a, s), w);
    }, {{"a", a}, {"s", s}});
    check("scalar broadcast sub", [&](ComputeGraph& g) {
      Rng w(6); return weighted_sum(g, g.sub(s, a), w);
    }, {{"a", a}, {"s", s}});
  }
  {
    auto a = random_tensor(rng, {3, 3});
    check("tanh", [&](ComputeGraph& g) {
      Rng w(7); return weighted_sum(g, g.tanh(a), w);
    }, {{"a", a}});
    check("sigmoid", [&](ComputeGraph& g) {
      Rng w(8); return weighted_sum(g, g.sigmoid(a), w);
    }, {{"a", a}});
  }
  {
    auto a = random_tensor(rng, {4, 2});
    check("softmax axis0", [&](ComputeGraph& g) {
      Rng w(9); return weighted_sum(g, g.softmax(a, 0), w);
    }, {{"a", a}});
    check("softmax axis1", [&](ComputeGraph& g) {
      Rng w(10); return weighted_sum(g, g.softmax(a, 1), w);
    }, {{"a", a}});
  }
  {
    auto a = random_tensor(rng, {2, 3});
    auto b = random_tensor(rng, {2, 2});
    check("concat axis1", [&](ComputeGraph& g) {
      Rng w(11); return weighted_sum(g, g.concat(a, b, 1), w);
    }, {{"a", a}, {"b", b}});
  }
  {
    auto a = random_tensor(rng, {3, 2});
    check("transpose", [&](ComputeGraph& g) {
      Rng w(12); return weighted_sum(g, g.transpose(a), w);
    }, {{"a", a}});
    check("reshape", [&](ComputeGraph& g) {
      Rng w(13); return weighted_sum(g, g.reshape(a, {2, 3}), w);
    }, {{"a", a}});
    check("scale", [&](ComputeGraph& g) {
      Rng w(14); return weighted_sum(g, g.scale(a, -2.5), w);
    }, {{"a", a}});
  }
  {
    auto a = random_tensor(rng, {1, 4});
    check("tile_rows", [&](ComputeGraph& g) {
      Rng w(15); return weighted_sum(g, g.tile_rows(a, 3), w);
    }, {{"a", a}});
  }
  {
    auto a = random_tensor(rng, {2, 3});
    check("bce_with_logits", [&](ComputeGraph& g) {
      return g.bce_with_logits(a, {1, 0, 0, 1, 1, 0});
    }, {{"a", a}});
  }
}

TEST_CASE("adjoint linearity on a random graph") {
  Rng rng(99);
  auto x = random_tensor(rng, {2, 3});
  auto y = random_tensor(rng, {3, 2});

  auto run = [&](int which) {
    ComputeGraph g;
    x->zero_grad();
    y->zero_grad();
    auto prod = g.matmul(x, y);
    auto l1 = g.sum(g.tanh(prod));
    auto l2 = g.sum(g.sigmoid(prod));
    TensorPtr loss = which == 0 ? l1 : which == 1 ? l2 : g.add(l1, l2);
    g.backward(loss);
    auto gx = x->grad;
    auto gy = y->grad;
    gx.insert(gx.end(), gy.begin(), gy.end());
    return gx;
  };

  auto g1 = run(0);
  auto g2 = run(1);
  auto gsum = run(2);
  for (std::size_t i = 0; i < gsum.size(); ++i)
    CHECK(gsum[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("replaying a seeded computation is bit-identical") {
  auto run = [] {
    Rng rng(123);
    ComputeGraph g;
    auto a = random_tensor(rng, {3, 3});
    auto b = random_tensor(rng, {3, 3});
    auto out = g.softmax(g.tanh(g.matmul(a, b)), 1);
    auto loss = g.sum(out);
    g.backward(loss);
    auto bytes = out->data;
    bytes.insert(bytes.end(), a->grad.begin(), a->grad.end());
    return bytes;
  };
  auto r1 = run();
  auto r2 = run();
  REQUIRE(r1.size() == r2.size());
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("bce matches hand values") {
  ComputeGraph g;
  auto zero = Tensor::scalar(0.0);
  CHECK(g.bce_with_logits(zero, {1.0})->data[0] ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto confident = Tensor::from({1, 2}, {20.0, -20.0});
  CHECK(g.bce_with_logits(confident, {1.0, 0.0})->data[0] < 1e-8);

  // Probability form agrees with the logit form away from saturation.
  auto logits = Tensor::from({1, 3}, {0.3, -1.2, 2.0});
  std::vector<double> y{1, 0, 1};
  std::vector<double> p;
  for (double s : logits->data) p.push_back(1.0 / (1.0 + std::exp(-s)));
  CHECK(bce_from_probs(p, y) ==
        doctest::Approx(g.bce_with_logits(logits, y)->data[0]).epsilon(1e-12));
}

TEST_CASE("bce gradient equals p minus y") {
  auto logits = Tensor::from({2, 2}, {0.5, -0.25, 1.5, 0.0}, true);
  std::vector<double> y{1, 0, 1, 0};
  ComputeGraph g;
  auto loss = g.bce_with_logits(logits, y);
  g.backward(loss);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits->data[i]));
    CHECK(logits->grad[i] == doctest::Approx(p - y[i]).epsilon(1e-12));
  }
  auto report = grad_check(
      [&](ComputeGraph& gg) { return gg.bce_with_logits(logits, y); },
      {{"logits", logits}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimError);
  auto t = Tensor::zeros({2, 3}, true);
  CHECK(t->numel() == 6);
  CHECK(t->grad.size() == 6);
  t->grad[0] = 5.0;
  t->zero_grad();
  CHECK(t->grad[0] == 0.0);
}
