// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gridattn/error.hpp"
#include "gridattn/ops.hpp"
#include "support.hpp"

using namespace gridattn;
using namespace gridattn::ops;
using gridattn::testing::random_tensor;

namespace {

Tensor3 make(Shape s, std::vector<double> v) { return Tensor3(s, std::move(v)); }

}  // namespace

TEST_CASE("tensor offsets are row-major with channels fastest") {
  Tensor3 t(2, 3, 4);
  CHECK(t.offset(1, 2, 3) == (1 * 3 + 2) * 4 + 3);
  t(1, 2, 3) = 5.0;
  CHECK(t.values()[23] == 5.0);
  CHECK(t.cell(1, 2)[3] == 5.0);
  CHECK_THROWS_AS(Tensor3(0, 1, 1), Error);
  CHECK_THROWS_AS(Tensor3(Shape{1, 2, 1}, std::vector<double>{1.0}), Error);
}

TEST_CASE("conv with a one-hot 1x1 kernel selects a channel") {
  Rng rng(1);
  const Tensor3 g = random_tensor(rng, {4, 5, 3});
  Tensor3 kernels(Shape{1, 1, 3}, 0.0);
  kernels(0, 0, 2) = 1.0;
  const std::vector<double> bias = {0.0};
  const Tensor3 out = conv_depthk(g, kernels, bias);
  REQUIRE(out.shape() == Shape{4, 5, 1});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(out(i, j, 0) == g(i, j, 2));
}

TEST_CASE("conv with zero kernels yields the bias everywhere") {
  Rng rng(2);
  const Tensor3 g = random_tensor(rng, {3, 3, 4});
  const Tensor3 kernels(Shape{2, 9, 4}, 0.0);
  const std::vector<double> bias = {1.5, -2.0};
  const Tensor3 out = conv_depthk(g, kernels, bias);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out(i, j, 0) == 1.5);
      CHECK(out(i, j, 1) == -2.0);
    }
}

TEST_CASE("3x3 conv on a single cell sees only the centre tap") {
  Rng rng(3);
  const Tensor3 g = random_tensor(rng, {1, 1, 5});
  const Tensor3 kernels = random_tensor(rng, {1, 9, 5});
  const std::vector<double> bias = {0.25};
  const Tensor3 out = conv_depthk(g, kernels, bias);
  double expect = 0.25;
  for (std::size_t k = 0; k < 5; ++k) expect += kernels(0, 4, k) * g(0, 0, k);
  CHECK(out(0, 0, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("conv rejects a kernel depth that differs from the grid depth") {
  const Tensor3 g(2, 2, 4);
  const Tensor3 kernels(Shape{1, 9, 3});
  const std::vector<double> bias = {0.0};
  CHECK_THROWS_AS(conv_depthk(g, kernels, bias), Error);
  const Tensor3 even(Shape{1, 4, 4});
  CHECK_THROWS_AS(conv_depthk(g, even, bias), Error);
}

TEST_CASE("1x1 conv is a per-cell linear map and commutes with cell permutations") {
  Rng rng(4);
  const Tensor3 g = random_tensor(rng, {3, 4, 6});
  const Tensor3 kernels = random_tensor(rng, {2, 1, 6});
  const std::vector<double> bias = {0.1, -0.3};
  const Tensor3 out = conv_depthk(g, kernels, bias);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t h = 0; h < 2; ++h) {
        double ref = bias[h];
        for (std::size_t k = 0; k < 6; ++k) ref += kernels(h, 0, k) * g(i, j, k);
        CHECK(out(i, j, h) == doctest::Approx(ref).epsilon(1e-14));
      }

  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  Tensor3 pg(g.shape());
  for (std::size_t c = 0; c < 12; ++c)
    for (std::size_t k = 0; k < 6; ++k) pg(perm[c] / 4, perm[c] % 4, k) = g(c / 4, c % 4, k);
  const Tensor3 pout = conv_depthk(pg, kernels, bias);
  for (std::size_t c = 0; c < 12; ++c)
    for (std::size_t h = 0; h < 2; ++h) CHECK(pout(perm[c] / 4, perm[c] % 4, h) == out(c / 4, c % 4, h));
}

TEST_CASE("pooling of a constant map is the constant for every mode") {
  const Tensor3 x(Shape{3, 4, 2}, 1.25);
  for (PoolMode m : {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg}) {
    const Tensor3 y = spatial_pool(x, m, 3);
    for (double v : y.values()) CHECK(v == 1.25);
  }
}

TEST_CASE("3x3 pooling over a 2x2 map reaches the whole grid") {
  const Tensor3 x = make({2, 2, 1}, {1, 2, 3, 4});
  {
    const Tensor3 out = spatial_pool(x, PoolMode::kMax, 3);
    for (double v : out.values()) CHECK(v == 4.0);
  }
  {
    const Tensor3 out = spatial_pool(x, PoolMode::kMin, 3);
    for (double v : out.values()) CHECK(v == 1.0);
  }
  {
    const Tensor3 out = spatial_pool(x, PoolMode::kAvg, 3);
    for (double v : out.values()) CHECK(v == 2.5);
  }
}

TEST_CASE("window 1 pooling is the identity") {
  Rng rng(5);
  const Tensor3 x = random_tensor(rng, {4, 3, 2});
  for (PoolMode m : {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg}) CHECK(spatial_pool(x, m, 1) == x);
}

TEST_CASE("average pooling divides by the number of valid cells") {
  const Tensor3 x = make({1, 3, 1}, {3, 6, 9});
  const Tensor3 y = spatial_pool(x, PoolMode::kAvg, 3);
  CHECK(y(0, 0, 0) == 4.5);
  CHECK(y(0, 1, 0) == 6.0);
  CHECK(y(0, 2, 0) == 7.5);
}

TEST_CASE("even or zero pooling windows are rejected") {
  const Tensor3 x(2, 2, 1);
  CHECK_THROWS_AS(spatial_pool(x, PoolMode::kMax, 2), Error);
  CHECK_THROWS_AS(spatial_pool(x, PoolMode::kMax, 0), Error);
}

TEST_CASE("min pooling is negated max pooling of the negation") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s{1 + static_cast<std::size_t>(rng.uniform_int(0, 6)), 1 + static_cast<std::size_t>(rng.uniform_int(0, 6)),
                  1 + static_cast<std::size_t>(rng.uniform_int(0, 3))};
    const Tensor3 x = random_tensor(rng, s, 10.0);
    Tensor3 neg = x;
    for (double& v : neg.values()) v = -v;
    for (std::size_t w : {1UL, 3UL, 5UL}) {
      const Tensor3 lo = spatial_pool(x, PoolMode::kMin, w);
      Tensor3 hi = spatial_pool(neg, PoolMode::kMax, w);
      for (double& v : hi.values()) v = -v;
      CHECK(lo == hi);
    }
  }
}

TEST_CASE("softmax closed forms") {
  CHECK(spatial_softmax(make({1, 1, 1}, {42.0}))(0, 0, 0) == 1.0);
  {
    const Tensor3 out = spatial_softmax(Tensor3(Shape{2, 2, 1}, -3.0));
    for (double v : out.values()) CHECK(v == 0.25);
  }
  const Tensor3 y = spatial_softmax(make({1, 2, 1}, {0.0, std::log(3.0)}));
  CHECK(y(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(y(0, 1, 0) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("softmax channels sum to one even for entries of magnitude 1e4") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = trial % 2 == 0 ? 1.0 : 1e4;
    const Tensor3 x = random_tensor(rng, {1 + static_cast<std::size_t>(trial % 7), 2 + static_cast<std::size_t>(trial % 5), 3}, scale);
    const Tensor3 y = spatial_softmax(x);
    for (std::size_t h = 0; h < 3; ++h) {
      double total = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) {
          CHECK(std::isfinite(y(i, j, h)));
          total += y(i, j, h);
        }
      CHECK(std::fabs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("softmax ignores a constant shift of a channel") {
  Rng rng(9);
  const Tensor3 x = random_tensor(rng, {3, 3, 2});
  Tensor3 shifted = x;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) shifted(i, j, 1) += 7.0;
  const Tensor3 a = spatial_softmax(x);
  const Tensor3 b = spatial_softmax(shifted);
  for (std::size_t n = 0; n < a.size(); ++n) CHECK(a.values()[n] == doctest::Approx(b.values()[n]).epsilon(1e-12));
}

TEST_CASE("aggregation with one-hot attention indexes the grid") {
  Rng rng(10);
  const Tensor3 g = random_tensor(rng, {4, 5, 6});
  Tensor3 a(Shape{4, 5, 3}, 0.0);
  for (std::size_t h = 0; h < 3; ++h) a(2, 3, h) = 1.0;
  const Tensor3 v = attend_aggregate(a, g);
  REQUIRE(v.shape() == Shape{3, 6, 1});
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t k = 0; k < 6; ++k) CHECK(v(h, k) == g(2, 3, k));
}

TEST_CASE("aggregation with uniform attention is the spatial mean") {
  Rng rng(11);
  const Tensor3 g = random_tensor(rng, {3, 4, 2});
  const Tensor3 a(Shape{3, 4, 2}, 1.0 / 12.0);
  const Tensor3 v = attend_aggregate(a, g);
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) mean += g(i, j, k);
    mean /= 12.0;
    CHECK(v(0, k) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(v(1, k) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("aggregation on a single cell returns that cell") {
  const Tensor3 g = make({1, 1, 3}, {1.0, -2.0, 0.5});
  const Tensor3 a(Shape{1, 1, 2}, 1.0);
  const Tensor3 v = attend_aggregate(a, g);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t k = 0; k < 3; ++k) CHECK(v(h, k) == g(0, 0, k));
  CHECK_THROWS_AS(attend_aggregate(Tensor3(Shape{2, 1, 2}, 0.5), g), Error);
}

TEST_CASE("activation examples") {
  const Tensor3 x = make({1, 1, 3}, {-1.0, 2.0, 0.0});
  const Tensor3 r = activation(x, Activation::kRelu);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[1] == 2.0);
  CHECK(activation(x, Activation::kTanh).values()[2] == 0.0);
  {
    const Tensor3 out = activation(Tensor3(Shape{2, 2, 1}, -3.0), Activation::kRelu);
    for (double v : out.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("linear head examples") {
  const std::vector<double> f = {1.0, 2.0, 3.0};
  Tensor3 eye(Shape{3, 3, 1}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  const std::vector<double> zero3(3, 0.0);
  CHECK(linear_head(f, eye, zero3) == f);
  const std::vector<double> b = {0.5, -1.0};
  CHECK(linear_head(f, Tensor3(Shape{2, 3, 1}, 0.0), b) == b);
  const std::vector<double> ones(4, 1.0);
  const std::vector<double> zero1 = {0.0};
  CHECK(linear_head(ones, Tensor3(Shape{1, 4, 1}, 1.0), zero1)[0] == 4.0);
  CHECK_THROWS_AS(linear_head(f, Tensor3(Shape{1, 4, 1}, 1.0), zero1), Error);
}

TEST_CASE("forward operations are pure") {
  Rng rng(12);
  const Tensor3 g = random_tensor(rng, {5, 4, 6});
  const Tensor3 kernels = random_tensor(rng, {3, 9, 6});
  const std::vector<double> bias = {0.1, 0.2, 0.3};
  const Tensor3 a = conv_depthk(g, kernels, bias);
  const Tensor3 b = conv_depthk(g, kernels, bias);
  CHECK(a == b);
  CHECK(spatial_softmax(spatial_pool(a, PoolMode::kMax, 3)) == spatial_softmax(spatial_pool(b, PoolMode::kMax, 3)));
}

TEST_CASE("pool modes and activations round-trip through their names") {
  for (PoolMode m : {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg}) CHECK(parse_pool_mode(to_string(m)) == m);
  for (Activation a : {Activation::kRelu, Activation::kTanh}) CHECK(parse_activation(to_string(a)) == a);
  CHECK_THROWS_AS(parse_pool_mode("median"), Error);
}
