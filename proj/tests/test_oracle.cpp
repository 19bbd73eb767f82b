// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "dtea/oracle.hpp"
#include "dtea/selfcheck.hpp"

namespace dtea {
namespace {

TEST(FiniteDiff, Square) {
  const std::size_t c = 0;
  const auto fd = oracle::finite_diff_grad([](const std::vector<double>& x) { return x[0] * x[0]; },
                                           std::vector<double>{3.0}, std::span(&c, 1));
  EXPECT_NEAR(fd[0].estimate, 6.0, 1e-8);
  EXPECT_FALSE(fd[0].selection_flip);
}

TEST(FiniteDiff, LinearIsExactToRounding) {
  const std::vector<std::size_t> coords{0, 1, 2};
  const auto fd = oracle::finite_diff_grad(
      [](const std::vector<double>& x) { return 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2]; },
      std::vector<double>{0.0, 10.0, -2.0}, coords);
  EXPECT_NEAR(fd[0].estimate, 2.0, 1e-9);
  EXPECT_NEAR(fd[1].estimate, -3.0, 1e-9);
  EXPECT_NEAR(fd[2].estimate, 0.5, 1e-9);
}

TEST(FiniteDiff, StepScalesWithMagnitude) {
  EXPECT_EQ(oracle::fd_step(0.0), 1e-5);
  EXPECT_EQ(oracle::fd_step(-1000.0), 1e-2);
}

TEST(FiniteDiff, FlagsSelectionFlips) {
  const std::size_t c = 0;
  auto f = [](const std::vector<double>& x) {
    return oracle::Probe{x[0], {x[0] > 0.0 ? std::size_t{1} : std::size_t{0}}};
  };
  EXPECT_TRUE(oracle::finite_diff_grad(f, std::vector<double>{0.0}, std::span(&c, 1))[0].selection_flip);
  EXPECT_FALSE(oracle::finite_diff_grad(f, std::vector<double>{0.5}, std::span(&c, 1))[0].selection_flip);
}

TEST(FiniteDiff, RejectsNonFinite) {
  const std::size_t c = 0;
  EXPECT_THROW(oracle::finite_diff_grad([](const std::vector<double>& x) { return std::log(x[0]); },
                                        std::vector<double>{0.0}, std::span(&c, 1)),
               NumericError);
}

TEST(RelativeError, Definition) {
  EXPECT_EQ(oracle::relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(oracle::relative_error(1.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(oracle::relative_error(0.0, 1e-13), 0.1);  // floor of 1e-12
}

TEST(CompareGradients, SkipsFlipsAndReportsWorst) {
  const std::vector<double> analytic{1.0, 2.0, 3.0};
  const std::vector<oracle::FdEntry> fd{{4, 1.0, false}, {5, 9.0, true}, {6, 3.3, false}};
  const auto r = oracle::compare_gradients(analytic, fd, 0.05);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_EQ(r.flips, 1u);
  EXPECT_EQ(r.worst, 6u);
  EXPECT_FALSE(r.pass);
}

TEST(Oracles, KnnTwoNodes) {
  const auto nodes = NodeMatrix<double>::from_rows(2, 1, {1, -1});
  const auto g = oracle::knn_bruteforce(nodes, 1, 1);
  EXPECT_EQ(g.edges[0].neighbors, std::vector<std::size_t>{1});
}

TEST(Oracles, KnnIdenticalFeatures) {
  const auto nodes = NodeMatrix<double>::from_rows(4, 3, std::vector<double>(12, 0.5));
  const auto g = oracle::knn_bruteforce(nodes, 2, 1);
  EXPECT_EQ(g.edges[2].neighbors, (std::vector<std::size_t>{0, 1}));
}

TEST(Oracles, EntropyZeroChannel) {
  EXPECT_NEAR(oracle::entropy_naive(FeatureMap<double>(1, 2, 2))[0], -0.34657359027997264, 1e-12);
}

TEST(Oracles, TopK) {
  EXPECT_EQ(oracle::topk_naive({-0.3, -0.1, -0.5}, 2), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(oracle::topk_naive({1, 2}, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(oracle::topk_naive({0.4, 0.4, 0.4, 0.4}, 3), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Oracles, ConvIdentityAndZero) {
  FeatureMap<double> x(2, 3, 3);
  std::iota(x.data().begin(), x.data().end(), 0.0);
  auto id = ConvKernel<double>::zeros(2, 2, 1, 1);
  id.weight(0, 0, 0, 0) = 1.0;
  id.weight(1, 1, 0, 0) = 1.0;
  EXPECT_EQ(oracle::conv2d_naive(x, id, 0, 1), x);
  const auto zero = oracle::conv2d_naive(x, ConvKernel<double>::zeros(3, 2, 3, 3), 1, 1);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST(Selfcheck, SuitesMeetMinimumCounts) {
  const auto knn = selfcheck::knn_suite(11);
  EXPECT_TRUE(knn.passed()) << knn.first_failure.dump();
  EXPECT_GE(knn.cases, 200u);
  const auto ent = selfcheck::entropy_suite(12);
  EXPECT_TRUE(ent.passed()) << ent.first_failure.dump();
  EXPECT_GE(ent.cases, 100u);
  const auto topk = selfcheck::topk_suite(13);
  EXPECT_TRUE(topk.passed());
  EXPECT_GE(topk.cases, 100u);
  const auto conv = selfcheck::conv_suite(14);
  EXPECT_TRUE(conv.passed()) << conv.first_failure.dump();
  EXPECT_GE(conv.cases, 50u);
}

TEST(Selfcheck, ZeroToleranceFails) {
  const auto ent = selfcheck::entropy_suite(12, 0.0);
  EXPECT_FALSE(ent.passed());
  EXPECT_TRUE(ent.first_failure.contains("seed"));
}

}  // namespace
}  // namespace dtea
