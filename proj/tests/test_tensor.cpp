// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "dtea/oracle.hpp"
#include "dtea/tensor.hpp"

namespace dtea {
namespace {

FeatureMap<double> random_map(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  FeatureMap<double> m(c, h, w);
  for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

TEST(FeatureMap, ShapeAndIndexing) {
  FeatureMap<float> m(2, 3, 4);
  EXPECT_EQ(m.size(), 24u);
  EXPECT_EQ(m.plane(), 12u);
  m(1, 2, 3) = 5.0f;
  EXPECT_EQ(m.data()[1 * 12 + 2 * 4 + 3], 5.0f);
  EXPECT_THROW(FeatureMap<float>(Shape3{2, 2, 2}, std::vector<float>(7)), ShapeError);
}

TEST(Conv2d, IdentityKernelIsBitExact) {
  Rng rng(1);
  const auto x = random_map(3, 5, 4, rng);
  auto k = ConvKernel<double>::zeros(3, 3, 1, 1);
  for (std::size_t c = 0; c < 3; ++c) k.weight(c, c, 0, 0) = 1.0;
  EXPECT_EQ(conv2d(x, k, 0), x);
}

TEST(Conv2d, ZeroKernelGivesZero) {
  Rng rng(2);
  const auto x = random_map(2, 6, 6, rng);
  const auto y = conv2d(x, ConvKernel<double>::zeros(4, 2, 3, 3), 1);
  EXPECT_EQ(y.shape(), (Shape3{4, 6, 6}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, MatchesNaiveOracle) {
  Rng rng(3);
  const auto x = random_map(4, 5, 5, rng);
  const auto k = seeded_init<double>(6, 4, 3, 3, rng);
  const auto ref = oracle::conv2d_naive(x, k, 1, 1);
  const auto got = conv2d(x, k, 1);
  ASSERT_EQ(got.shape(), ref.shape());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_LE(oracle::relative_error(got.data()[i], ref.data()[i]), 1e-6);
  }
}

TEST(Conv2d, GroupedStridedMatchesOracle) {
  Rng rng(4);
  const auto x = random_map(6, 9, 7, rng);
  const auto k = seeded_init<double>(9, 6, 3, 2, rng, 3);
  const auto ref = oracle::conv2d_naive(x, k, 2, 2);
  const auto got = conv2d(x, k, 2, 2);
  ASSERT_EQ(got.shape(), ref.shape());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], ref.data()[i], 1e-12);
}

TEST(Conv2d, Linearity) {
  Rng rng(5);
  const auto a = random_map(3, 6, 6, rng);
  const auto b = random_map(3, 6, 6, rng);
  auto k = seeded_init<double>(2, 3, 3, 3, rng);
  FeatureMap<double> sum = a;
  add_inplace(sum, b);
  const auto ya = conv2d(a, k, 1), yb = conv2d(b, k, 1), ys = conv2d(sum, k, 1);
  for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_NEAR(ys.data()[i], ya.data()[i] + yb.data()[i], 1e-12);
}

TEST(Conv2d, RejectsChannelMismatch) {
  const FeatureMap<double> x(3, 4, 4);
  EXPECT_THROW(conv2d(x, ConvKernel<double>::zeros(2, 2, 3, 3), 1), ShapeError);
}

// <conv(x), g> == <x, conv^T(g)> and likewise for the kernel.
TEST(Conv2d, BackwardIsAdjoint) {
  Rng rng(6);
  const auto x = random_map(4, 7, 6, rng);
  const auto k = seeded_init<double>(6, 4, 3, 3, rng, 2);
  const auto y = conv2d(x, k, 1, 2);
  const auto g = random_map(y.channels(), y.height(), y.width(), rng);
  const auto grads = conv2d_backward(x, k, 1, 2, g);

  auto k0 = k;
  std::fill(k0.bias.begin(), k0.bias.end(), 0.0);
  const auto y0 = conv2d(x, k0, 1, 2);
  const double lhs = std::inner_product(y0.data().begin(), y0.data().end(), g.data().begin(), 0.0);
  const double rhs_x = std::inner_product(x.data().begin(), x.data().end(), grads.input.data().begin(), 0.0);
  const double rhs_k =
      std::inner_product(k.weights.begin(), k.weights.end(), grads.kernel.weights.begin(), 0.0);
  EXPECT_NEAR(lhs, rhs_x, 1e-10);
  EXPECT_NEAR(lhs, rhs_k, 1e-10);
  for (std::size_t o = 0; o < 6; ++o) {
    double s = 0.0;
    for (double v : g.channel(o)) s += v;
    EXPECT_NEAR(grads.kernel.bias[o], s, 1e-12);
  }
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(7);
  const auto x = random_map(2, 5, 3, rng);
  EXPECT_EQ(resize_bilinear(x, 5, 3), x);
}

TEST(Resize, HalfPixelMean) {
  const FeatureMap<double> x(Shape3{1, 2, 2}, {1, 2, 3, 4});
  const auto y = resize_bilinear(x, 1, 1);
  EXPECT_DOUBLE_EQ(y(0, 0, 0), 2.5);
}

TEST(Resize, ConstantsStayConstant) {
  const FeatureMap<float> x(3, 7, 7, 1.25f);
  const auto y = resize_bilinear(x, 14, 14);
  EXPECT_EQ(y.shape(), (Shape3{3, 14, 14}));
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 1.25f);
}

TEST(Resize, OutputWithinInputRange) {
  Rng rng(8);
  const auto x = random_map(2, 9, 5, rng);
  for (auto [h, w] : {std::pair{3, 2}, std::pair{17, 11}, std::pair{1, 1}}) {
    const auto y = resize_bilinear(x, h, w);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto src = x.channel(c);
      const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
      for (double v : y.channel(c)) {
        EXPECT_GE(v, *lo - 1e-12);
        EXPECT_LE(v, *hi + 1e-12);
      }
    }
  }
}

TEST(Resize, BackwardIsAdjoint) {
  Rng rng(9);
  const auto x = random_map(2, 8, 6, rng);
  const auto y = resize_bilinear(x, 3, 5);
  const auto g = random_map(2, 3, 5, rng);
  const auto gx = resize_bilinear_backward(g, 8, 6);
  const double lhs = std::inner_product(y.data().begin(), y.data().end(), g.data().begin(), 0.0);
  const double rhs = std::inner_product(x.data().begin(), x.data().end(), gx.data().begin(), 0.0);
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Concat, FourStagesMakeFusedMap) {
  std::vector<FeatureMap<float>> parts(4, FeatureMap<float>(32, 7, 7));
  const auto fused = concat_channels(std::span<const FeatureMap<float>>(parts));
  EXPECT_EQ(fused.shape(), (Shape3{128, 7, 7}));
}

TEST(Concat, SingleInputIsIdentity) {
  Rng rng(10);
  const std::vector<FeatureMap<double>> one{random_map(3, 2, 2, rng)};
  EXPECT_EQ(concat_channels(std::span<const FeatureMap<double>>(one)), one[0]);
}

TEST(Concat, SplitRoundTrips) {
  Rng rng(11);
  const std::vector<FeatureMap<double>> parts{random_map(2, 3, 3, rng), random_map(5, 3, 3, rng),
                                              random_map(1, 3, 3, rng)};
  const auto fused = concat_channels(std::span<const FeatureMap<double>>(parts));
  const std::vector<std::size_t> groups{2, 5, 1};
  const auto back = split_channels(fused, std::span<const std::size_t>(groups));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i], parts[i]);
}

TEST(Split, Groups) {
  Rng rng(12);
  const auto x = random_map(128, 7, 7, rng);
  const std::vector<std::size_t> four(4, 32);
  for (const auto& part : split_channels(x, std::span<const std::size_t>(four))) {
    EXPECT_EQ(part.shape(), (Shape3{32, 7, 7}));
  }
  const std::vector<std::size_t> whole{128};
  EXPECT_EQ(split_channels(x, std::span<const std::size_t>(whole))[0], x);
  const std::vector<std::size_t> ones(128, 1);
  const auto singles = split_channels(x, std::span<const std::size_t>(ones));
  EXPECT_EQ(concat_channels(std::span<const FeatureMap<double>>(singles)), x);
  const std::vector<std::size_t> wrong{64, 32};
  EXPECT_THROW(split_channels(x, std::span<const std::size_t>(wrong)), ShapeError);
}

TEST(Sigmoid, Values) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(1.0), 0.7310585786300049, 1e-12);
  for (double x : {0.3, 2.0, 7.5}) EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-6);
  EXPECT_EQ(sigmoid(100.0), 1.0 - kSigmoidClamp);
  EXPECT_EQ(sigmoid(-100.0), kSigmoidClamp);
  EXPECT_EQ(sigmoid_derivative(sigmoid(100.0)), 0.0);
}

TEST(SeededInit, Deterministic) {
  Rng a(99), b(99);
  EXPECT_EQ(seeded_init<float>(8, 4, 3, 3, a), seeded_init<float>(8, 4, 3, 3, b));
}

TEST(SeededInit, BoundFromFanIn) {
  Rng rng(3);
  const auto k = seeded_init<double>(5, 6, 1, 1, rng);  // fan_in 6 -> bound 1
  for (double w : k.weights) {
    EXPECT_GE(w, -1.0);
    EXPECT_LE(w, 1.0);
  }
  for (double b : k.bias) EXPECT_EQ(b, 0.0);
}

TEST(SeededInit, MeanNearZero) {
  Rng rng(4);
  const auto k = seeded_init<double>(1, 6, 1, 100000 / 6 + 1, rng);
  const double bound = std::sqrt(6.0 / static_cast<double>(k.fan_in()));
  const double mean = std::accumulate(k.weights.begin(), k.weights.end(), 0.0) / static_cast<double>(k.weights.size());
  EXPECT_GE(k.weights.size(), 100000u);
  EXPECT_LT(std::abs(mean), 0.01 * bound);
}

}  // namespace
}  // namespace dtea
