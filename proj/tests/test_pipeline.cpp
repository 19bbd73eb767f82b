// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>

#include <gtest/gtest.h>

#include "dtea/oracle.hpp"
#include "dtea/parallel.hpp"
#include "dtea/pipeline.hpp"
#include "dtea/selfcheck.hpp"

namespace dtea {
namespace {

template <typename T>
bool bit_equal(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

TEST(Config, DefaultGeometry) {
  const auto c = default_config();
  EXPECT_EQ(c.Cs, 32u);
  EXPECT_EQ(c.fused_channels(), 128u);
  EXPECT_EQ(c.target_h(), 7u);
  EXPECT_EQ(c.target_w(), 7u);
  EXPECT_EQ(c.mu, 3.99);
  EXPECT_EQ(c.K, 64u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsKAboveFusedChannels) {
  auto c = default_config();
  c.K = 200;
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'K'"), std::string::npos);
  }
  EXPECT_THROW(Pipeline<float>::build(c), ConfigError);
}

TEST(Config, RejectsImpossibleNeighborhood) {
  auto c = default_config();
  c.k = 49;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_config();
  c.H = 100;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pipeline, SameSeedSameParameters) {
  const auto a = Pipeline<float>::build(default_config());
  const auto b = Pipeline<float>::build(default_config());
  std::vector<std::vector<float>> pa, pb;
  for_each_parameter(a.parameters(), [&](const std::string&, std::span<const float> s) { pa.emplace_back(s.begin(), s.end()); });
  for_each_parameter(b.parameters(), [&](const std::string&, std::span<const float> s) { pb.emplace_back(s.begin(), s.end()); });
  EXPECT_EQ(pa, pb);
  auto other = default_config();
  other.seed = 1;
  std::vector<std::vector<float>> pc;
  for_each_parameter(Pipeline<float>::build(other).parameters(),
                     [&](const std::string&, std::span<const float> s) { pc.emplace_back(s.begin(), s.end()); });
  EXPECT_NE(pa, pc);
}

TEST(Pipeline, DefaultShapes) {
  const auto cfg = default_config();
  const auto pipe = Pipeline<float>::build(cfg);
  const auto art = pipe.forward(synthetic_stages<float>(cfg, 42));
  const std::size_t ch[] = {64, 128, 320, 512}, side[] = {56, 28, 14, 7};
  for (std::size_t i = 0; i < kStageCount; ++i) EXPECT_EQ(art.outputs[i].shape(), (Shape3{ch[i], side[i], side[i]}));
  EXPECT_EQ(art.f_str.shape(), (Shape3{128, 7, 7}));
  EXPECT_EQ(art.graph.edges.size(), 49u);
  EXPECT_EQ(art.gates.size(), 49u * 8u);
  EXPECT_EQ(art.report.selected.size(), 64u);
  EXPECT_EQ(selfcheck::check_run_invariants(pipe, art), "");
}

TEST(Pipeline, ForwardIsDeterministic) {
  auto cfg = selfcheck::gradient_check_config(tiny_config());
  cfg.precision = Precision::f32;
  const auto pipe = Pipeline<float>::build(cfg);
  const auto in = synthetic_stages<float>(cfg, 3);
  const auto a = pipe.forward(in);
  const auto b = pipe.forward(in);
  for (std::size_t i = 0; i < kStageCount; ++i) EXPECT_TRUE(bit_equal(a.outputs[i], b.outputs[i]));
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_EQ(a.report, b.report);
}

TEST(Pipeline, ThreadCountDoesNotChangeBits) {
  const auto cfg = default_config();
  const auto pipe = Pipeline<float>::build(cfg);
  const auto in = synthetic_stages<float>(cfg, 42);
  const std::size_t saved = thread_budget();
  set_thread_budget(1);
  const auto a = pipe.forward(in);
  set_thread_budget(8);
  const auto b = pipe.forward(in);
  set_thread_budget(saved);
  for (std::size_t i = 0; i < kStageCount; ++i) EXPECT_TRUE(bit_equal(a.outputs[i], b.outputs[i]));
  EXPECT_EQ(a.gates, b.gates);
}

TEST(Pipeline, WrongStageShapeNamesStage) {
  const auto cfg = default_config();
  const auto pipe = Pipeline<float>::build(cfg);
  auto in = synthetic_stages<float>(cfg, 1);
  in[2] = FeatureMap<float>(320, 14, 13);
  try {
    pipe.forward(in);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 3"), std::string::npos);
  }
}

// All-zero inputs make every fused channel spatially constant, so the
// hypergraph comes from the position encoding alone.
TEST(Pipeline, ConstantInputGraphFollowsPositionEncoding) {
  auto cfg = default_config();
  const auto pipe = Pipeline<double>::build(cfg);
  std::array<FeatureMap<double>, kStageCount> in;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    in[i] = FeatureMap<double>(pipe.input_shapes()[i].channels, pipe.input_shapes()[i].height,
                               pipe.input_shapes()[i].width);
  }
  const auto art = pipe.forward(in);
  for (std::size_t c = 0; c < art.cache->str.input.channels(); ++c) {
    for (double v : art.cache->str.input.channel(c)) EXPECT_EQ(v, art.cache->str.input.channel(c)[0]);
  }
  // The refined map is the shift (zero), leaving the bare encoding.
  NodeMatrix<double> pe{7, 7, 128, position_encoding<double>(7, 7, 128), {}};
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 7; ++c) pe.coords.push_back({r, c});
  }
  EXPECT_EQ(art.graph, oracle::knn_bruteforce(pe, cfg.k, cfg.dilation));
}

TEST(Pipeline, ParameterNames) {
  const auto pipe = Pipeline<double>::build(tiny_config());
  std::vector<std::string> names;
  for_each_parameter(pipe.parameters(), [&](const std::string& n, std::span<const double>) { names.push_back(n); });
  EXPECT_EQ(names.front(), "preproc.compress1.weight");
  EXPECT_EQ(names.back(), "postproc.restore4.bias");
  EXPECT_NE(std::find(names.begin(), names.end(), "str.alpha"), names.end());
  EXPECT_EQ(find_parameter(pipe.parameters(), "str.alpha").size(), 1u);
  EXPECT_THROW(find_parameter(pipe.parameters(), "nope"), DomainError);
}

TEST(Pipeline, GradientOfFixedHyperparameterIsRejected) {
  const auto cfg = tiny_config();
  const auto pipe = Pipeline<double>::build(cfg);
  const auto art = pipe.forward(synthetic_stages<double>(cfg, 1));
  std::array<FeatureMap<double>, kStageCount> up;
  for (std::size_t i = 0; i < kStageCount; ++i) up[i] = FeatureMap<double>(art.outputs[i].shape(), std::vector<double>(art.outputs[i].size(), 1.0));
  const auto g = pipe.backward(art, up);
  EXPECT_THROW(g.get("mu"), DomainError);
  EXPECT_THROW(g.get("K"), DomainError);
  EXPECT_THROW(g.get("k"), DomainError);
  EXPECT_NO_THROW(g.get("epg.gate.weight"));
}

TEST(Pipeline, ZeroUpstreamGivesZeroGradients) {
  const auto cfg = selfcheck::gradient_check_config(tiny_config());
  const auto pipe = Pipeline<double>::build(cfg);
  const auto art = pipe.forward(synthetic_stages<double>(cfg, 1));
  std::array<FeatureMap<double>, kStageCount> up;
  for (std::size_t i = 0; i < kStageCount; ++i) up[i] = FeatureMap<double>(art.outputs[i].shape());
  const auto g = pipe.backward(art, up);
  for (const auto& s : g.stage_inputs) {
    for (double v : s.data()) EXPECT_EQ(v, 0.0);
  }
  for_each_parameter(g.params, [&](const std::string& name, std::span<const double> s) {
    for (double v : s) EXPECT_EQ(v, 0.0) << name;
  });
}

TEST(Pipeline, BackwardValidatesInputs) {
  const auto cfg = tiny_config();
  const auto pipe = Pipeline<double>::build(cfg);
  auto art = pipe.forward(synthetic_stages<double>(cfg, 1));
  std::array<FeatureMap<double>, kStageCount> up;
  for (std::size_t i = 0; i < kStageCount; ++i) up[i] = FeatureMap<double>(art.outputs[i].shape());
  up[1] = FeatureMap<double>(1, 1, 1);
  EXPECT_THROW(pipe.backward(art, up), ShapeError);
  art.cache.reset();
  EXPECT_THROW(pipe.backward(art, up), StateError);
}

// Single f_1 entry, end to end.
TEST(Pipeline, InputGradientMatchesFiniteDifferences) {
  const auto cfg = selfcheck::gradient_check_config(tiny_config());
  const auto pipe = Pipeline<double>::build(cfg);
  const auto in = synthetic_stages<double>(cfg, 5);
  const auto art = pipe.forward(in);
  Rng rng(6);
  std::array<FeatureMap<double>, kStageCount> up;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    up[i] = FeatureMap<double>(art.outputs[i].channels(), art.outputs[i].height(), art.outputs[i].width());
    for (auto& v : up[i].data()) v = rng.uniform(-1.0, 1.0);
  }
  const auto g = pipe.backward(art, up);
  std::size_t coord = 0;
  while (g.stage_inputs[0].data()[coord] == 0.0) ++coord;

  auto f = [&](const std::vector<double>& x) {
    auto local = in;
    std::copy(x.begin(), x.end(), local[0].data().begin());
    const auto run = pipe.forward(local);
    oracle::Probe p;
    for (std::size_t i = 0; i < kStageCount; ++i) {
      for (std::size_t j = 0; j < up[i].size(); ++j) p.value += up[i].data()[j] * run.outputs[i].data()[j];
    }
    for (const auto& e : run.graph.edges) p.selection.insert(p.selection.end(), e.neighbors.begin(), e.neighbors.end());
    p.selection.insert(p.selection.end(), run.report.selected.begin(), run.report.selected.end());
    return p;
  };
  const auto fd = oracle::finite_diff_grad(
      f, std::vector<double>(in[0].data().begin(), in[0].data().end()), std::span(&coord, 1));
  ASSERT_FALSE(fd[0].selection_flip);
  EXPECT_LE(oracle::relative_error(g.stage_inputs[0].data()[coord], fd[0].estimate), 1e-5);
}

TEST(Pipeline, WithParametersChecksSizes) {
  const auto pipe = Pipeline<double>::build(tiny_config());
  auto p = pipe.parameters();
  p.epg.gate.weights.pop_back();
  EXPECT_THROW(pipe.with_parameters(p), ShapeError);
}

TEST(GradientSuite, TinyPresetPasses) {
  selfcheck::GradientCheckSetup setup;
  const auto out = selfcheck::gradient_suite(setup);
  EXPECT_TRUE(out.suite.passed()) << out.suite.first_failure.dump();
  EXPECT_GE(out.str.checked, 20u);
  EXPECT_GE(out.epg.checked, 20u);
  EXPECT_GE(out.pipeline.checked, 20u);
}

TEST(ShapeSuite, RandomConfigsHoldInvariants) {
  const auto r = selfcheck::shape_suite(77, 20);
  EXPECT_TRUE(r.passed()) << r.first_failure.dump();
}

}  // namespace
}  // namespace dtea
