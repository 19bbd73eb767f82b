// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Oracle-equivalence, gradient and invariant suites. `dtea selfcheck` runs
// them all; the acceptance binary runs them one criterion at a time.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtea/config.hpp"
#include "dtea/epg.hpp"
#include "dtea/oracle.hpp"
#include "dtea/pipeline.hpp"
#include "dtea/str.hpp"
#include "dtea/tensor.hpp"

namespace dtea::selfcheck {

using json = nlohmann::json;

inline constexpr std::size_t kMinKnnCases = 200;
inline constexpr std::size_t kMinEntropyCases = 100;
inline constexpr std::size_t kMinTopkCases = 100;
inline constexpr std::size_t kMinConvCases = 50;
inline constexpr std::size_t kMinShapeCases = 50;
inline constexpr std::size_t kMinGradCoords = 20;

inline constexpr double kEntropyRelTol = 1e-5;
inline constexpr double kConvRelTolF64 = 1e-6;
inline constexpr double kConvRelTolF32 = 1e-4;
inline constexpr double kModuleGradRelTol = 1e-6;
inline constexpr double kPipelineGradRelTol = 1e-5;

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  json first_failure = nullptr;  // replayable description of the first failing case
  double max_error = 0.0;

  bool passed() const { return failures == 0 && cases > 0; }

  void fail(json detail) {
    if (failures++ == 0) first_failure = std::move(detail);
  }
};

/// Max |a - ref| over max |ref|, a scale-aware relative deviation that does
/// not blow up on individual near-zero entries.
inline double max_relative_deviation(std::span<const double> a, std::span<const double> ref) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - ref[i]));
    scale = std::max(scale, std::abs(ref[i]));
  }
  return diff / std::max(scale, 1e-12);
}

// ---------------------------------------------------------------------------
// Oracle equivalence

inline SuiteResult knn_suite(std::uint64_t seed, std::size_t cases = kMinKnnCases) {
  SuiteResult r{"knn"};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t case_seed = rng.next_u64();
    Rng local(case_seed);
    const std::size_t n = 2 + local.below(63);  // 2..64
    const std::size_t D = 1 + local.below(16);
    const std::size_t k = 1 + local.below(std::min<std::size_t>(8, n - 1));
    const std::size_t dmax = std::min<std::size_t>(3, (n - 1) / k);
    const std::size_t d = 1 + local.below(dmax);
    std::vector<float> feats(n * D);
    for (auto& v : feats) v = static_cast<float>(local.uniform(-1.0, 1.0));
    // Sprinkle exact duplicates and zero vectors so tie handling is exercised.
    if (local.below(4) == 0) {
      const std::size_t a = local.below(n), b = local.below(n);
      std::copy_n(feats.begin() + a * D, D, feats.begin() + b * D);
    }
    if (local.below(6) == 0) std::fill_n(feats.begin() + local.below(n) * D, D, 0.0f);
    auto nodes = NodeMatrix<float>::from_rows(n, D, feats);
    ++r.cases;
    if (dilated_knn(nodes, k, d) != oracle::knn_bruteforce(nodes, k, d)) {
      r.fail({{"case", c}, {"seed", case_seed}, {"n", n}, {"D", D}, {"k", k}, {"d", d}});
    }
  }
  return r;
}

inline SuiteResult entropy_suite(std::uint64_t seed, double tol_scale = 1.0,
                                 std::size_t cases = kMinEntropyCases) {
  SuiteResult r{"entropy"};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t case_seed = rng.next_u64();
    Rng local(case_seed);
    const std::size_t C = 1 + local.below(16), H = 1 + local.below(9), W = 1 + local.below(9);
    FeatureMap<float> f(C, H, W);
    for (auto& v : f.data()) v = static_cast<float>(local.uniform(-6.0, 6.0));
    const auto main = channel_entropy(f);
    const auto ref = oracle::entropy_naive(f);
    double worst = 0.0;
    for (std::size_t i = 0; i < C; ++i) worst = std::max(worst, oracle::relative_error(main[i], ref[i]));
    r.max_error = std::max(r.max_error, worst);
    const std::size_t K = 1 + local.below(C);
    const bool same_sel = lowest_k(main, K) == oracle::topk_naive(main, K);
    ++r.cases;
    if (worst > kEntropyRelTol * tol_scale || !same_sel) {
      r.fail({{"case", c}, {"seed", case_seed}, {"shape", {C, H, W}}, {"K", K},
              {"max_rel_error", worst}, {"selection_match", same_sel}});
    }
  }
  return r;
}

inline SuiteResult topk_suite(std::uint64_t seed, std::size_t cases = kMinTopkCases) {
  SuiteResult r{"topk"};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t case_seed = rng.next_u64();
    Rng local(case_seed);
    const std::size_t n = 1 + local.below(128);
    std::vector<double> scores(n);
    // Coarse values force plenty of ties.
    for (auto& s : scores) s = -static_cast<double>(local.below(8)) / 8.0;
    const std::size_t K = 1 + local.below(n);
    ++r.cases;
    if (lowest_k(scores, K) != oracle::topk_naive(scores, K)) {
      r.fail({{"case", c}, {"seed", case_seed}, {"n", n}, {"K", K}});
    }
  }
  return r;
}

inline SuiteResult conv_suite(std::uint64_t seed, double tol_scale = 1.0, std::size_t cases = kMinConvCases) {
  SuiteResult r{"conv"};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t case_seed = rng.next_u64();
    Rng local(case_seed);
    const std::size_t groups = 1 + local.below(3);
    const std::size_t in = groups * (1 + local.below(4));
    const std::size_t out = groups * (1 + local.below(4));
    const std::size_t kh = 1 + local.below(5), kw = 1 + local.below(5);
    const std::size_t pad = local.below(3), stride = 1 + local.below(2);
    const std::size_t H = std::max<std::size_t>(kh, 1 + local.below(9));
    const std::size_t W = std::max<std::size_t>(kw, 1 + local.below(9));
    FeatureMap<double> x(in, H, W);
    for (auto& v : x.data()) v = local.uniform(-1.0, 1.0);
    auto k = seeded_init<double>(out, in, kh, kw, local, groups);
    for (auto& b : k.bias) b = local.uniform(-0.5, 0.5);

    const auto ref = oracle::conv2d_naive(x, k, pad, stride);
    const auto got64 = conv2d(x, k, pad, stride);
    const auto got32 = conv2d(x.cast<float>(), k.cast<float>(), pad, stride).cast<double>();
    const double e64 = max_relative_deviation(got64.data(), ref.data());
    const double e32 = max_relative_deviation(got32.data(), ref.data());
    r.max_error = std::max(r.max_error, e64);
    ++r.cases;
    if (got64.shape() != ref.shape() || e64 > kConvRelTolF64 * tol_scale || e32 > kConvRelTolF32 * tol_scale) {
      r.fail({{"case", c}, {"seed", case_seed}, {"in", in}, {"out", out}, {"groups", groups},
              {"kernel", {kh, kw}}, {"padding", pad}, {"stride", stride}, {"input", {H, W}},
              {"rel_error_f64", e64}, {"rel_error_f32", e32}});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace detail {

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

template <typename Point, typename Visit>
std::pair<std::vector<double>, std::vector<Block>> flatten(Point& p, Visit&& visit) {
  std::vector<double> x;
  std::vector<Block> blocks;
  visit(p, [&](const std::string& name, std::span<double> s) {
    blocks.push_back({name, x.size(), s.size()});
    x.insert(x.end(), s.begin(), s.end());
  });
  return {std::move(x), std::move(blocks)};
}

template <typename Point, typename Visit>
void unflatten(Point& p, Visit&& visit, const std::vector<double>& x) {
  std::size_t at = 0;
  visit(p, [&](const std::string&, std::span<double> s) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(at), s.size(), s.begin());
    at += s.size();
  });
}

// Picks up to `per_block` distinct coordinates per block that satisfy `ok`.
inline std::vector<std::size_t> pick_coords(const std::vector<Block>& blocks, Rng& rng,
                                            const std::function<std::size_t(const Block&)>& per_block,
                                            const std::function<bool(std::size_t)>& ok) {
  std::vector<std::size_t> coords;
  for (const auto& b : blocks) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < b.size; ++i) {
      if (ok(b.offset + i)) pool.push_back(b.offset + i);
    }
    const std::size_t want = std::min(per_block(b), pool.size());
    for (std::size_t j = 0; j < want; ++j) {
      const std::size_t pick = j + rng.below(pool.size() - j);
      std::swap(pool[j], pool[pick]);
      coords.push_back(pool[j]);
    }
  }
  return coords;
}

inline std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

inline double weighted_sum(std::span<const double> w, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
  return s;
}

inline void append_graph_signature(std::vector<std::size_t>& sig, const Hypergraph& g) {
  for (const auto& e : g.edges) sig.insert(sig.end(), e.neighbors.begin(), e.neighbors.end());
}

// Relative error is meaningless where the analytic derivative is exactly
// zero (e.g. a bias feeding instance norm): the central difference there is
// rounding noise. Those coordinates are checked against an absolute bound.
inline constexpr double kStructuralZeroAbsTol = 1e-8;

template <typename Fn>
oracle::GradCheckResult run_check(Fn&& f, const std::vector<double>& x, const std::vector<double>& analytic,
                                  const std::vector<std::size_t>& coords, double tol,
                                  const std::vector<std::size_t>& zero_coords = {}) {
  const auto fd = oracle::finite_diff_grad(f, x, coords);
  std::vector<double> a;
  for (std::size_t c : coords) a.push_back(analytic[c]);
  auto r = oracle::compare_gradients(a, fd, tol);
  for (const auto& e : oracle::finite_diff_grad(f, x, zero_coords)) {
    if (e.selection_flip) continue;
    ++r.zero_checked;
    r.zero_max_abs = std::max(r.zero_max_abs, std::abs(e.estimate));
  }
  r.pass = r.pass && r.zero_max_abs <= kStructuralZeroAbsTol;
  return r;
}

// Up to `per_block` coordinates per block where the analytic derivative is
// exactly zero.
inline std::vector<std::size_t> zero_coords(const std::vector<Block>& blocks, const std::vector<double>& analytic,
                                            Rng& rng, std::size_t per_block) {
  return pick_coords(
      blocks, rng, [&](const Block&) { return per_block; }, [&](std::size_t i) { return analytic[i] == 0.0; });
}

struct StrPoint {
  FeatureMap<double> input;
  StrParams<double> params;
};

inline void visit_str(StrPoint& p, const std::function<void(const std::string&, std::span<double>)>& fn) {
  fn("f_concat", p.input.data());
  fn("str.alpha", std::span(&p.params.alpha, 1));
  fn("str.beta", std::span(&p.params.beta, 1));
  fn("str.epsilon", std::span(&p.params.epsilon, 1));
  fn("str.refine.weight", p.params.refine.weights);
  fn("str.refine.bias", p.params.refine.bias);
  fn("str.norm.scale", p.params.norm_scale);
  fn("str.norm.shift", p.params.norm_shift);
  fn("str.update.weight", p.params.update.weights);
  fn("str.update.bias", p.params.update.bias);
}

struct EpgPoint {
  FeatureMap<double> input;
  EpgParams<double> params;
};

inline void visit_epg(EpgPoint& p, const std::function<void(const std::string&, std::span<double>)>& fn) {
  fn("f_str", p.input.data());
  fn("epg.perturb.weight", p.params.perturb.weights);
  fn("epg.perturb.bias", p.params.perturb.bias);
  fn("epg.gate.weight", p.params.gate.weights);
  fn("epg.gate.bias", p.params.gate.bias);
}

struct PipelinePoint {
  std::array<FeatureMap<double>, kStageCount> inputs;
  PipelineParameters<double> params;
};

inline void visit_pipeline(PipelinePoint& p, const std::function<void(const std::string&, std::span<double>)>& fn) {
  for (std::size_t i = 0; i < kStageCount; ++i) fn("input.f" + std::to_string(i + 1), p.inputs[i].data());
  for_each_parameter(p.params, fn);
}

}  // namespace detail

struct GradientCheckSetup {
  PipelineConfig config = tiny_config();
  std::uint64_t seed = 7;
  double tol_scale = 1.0;
};

/// Makes the gate, cosine and epsilon branches carry non-zero derivatives.
inline PipelineConfig gradient_check_config(PipelineConfig c) {
  c.alpha = 0.75;
  c.beta = -0.25;
  c.epsilon = 0.125;
  c.precision = Precision::f64;
  return c;
}

struct GradientSuiteOutput {
  SuiteResult suite;
  oracle::GradCheckResult str;
  oracle::GradCheckResult epg;
  oracle::GradCheckResult pipeline;
};

inline oracle::GradCheckResult check_str_gradients(const GradientCheckSetup& setup) {
  const auto cfg = gradient_check_config(setup.config);
  const auto pipe = Pipeline<double>::build(cfg);
  const auto art = pipe.forward(synthetic_stages<double>(cfg, setup.seed));
  Rng rng(setup.seed ^ 0x5354525354ULL);

  detail::StrPoint point{art.cache->str.input, pipe.parameters().str};
  const auto weights = detail::random_weights(art.f_str.size(), rng);
  const FeatureMap<double> upstream(art.f_str.shape(), weights);

  const auto g = str_backward(art.cache->str, point.params, upstream);
  detail::StrPoint grad_point{g.f_concat, point.params};
  grad_point.params.alpha = g.alpha;
  grad_point.params.beta = g.beta;
  grad_point.params.epsilon = g.epsilon;
  grad_point.params.refine = g.refine;
  grad_point.params.update = g.update;
  grad_point.params.norm_scale = g.norm_scale;
  grad_point.params.norm_shift = g.norm_shift;

  const auto flat = detail::flatten(point, detail::visit_str);
  const auto& x = flat.first;
  const auto& blocks = flat.second;
  const auto analytic = detail::flatten(grad_point, detail::visit_str).first;
  const auto coords = detail::pick_coords(
      blocks, rng, [](const detail::Block& b) { return b.name == "f_concat" ? std::size_t{10} : std::size_t{2}; },
      [&](std::size_t i) { return analytic[i] != 0.0; });
  const auto zeros = detail::zero_coords(blocks, analytic, rng, 1);

  auto f = [&](const std::vector<double>& at) {
    detail::StrPoint p = point;
    detail::unflatten(p, detail::visit_str, at);
    const auto fwd = str_forward(p.input, p.params);
    oracle::Probe probe{detail::weighted_sum(weights, fwd.f_str.data()), {}};
    detail::append_graph_signature(probe.selection, fwd.graph);
    return probe;
  };
  return detail::run_check(f, x, analytic, coords, kModuleGradRelTol * setup.tol_scale, zeros);
}

inline oracle::GradCheckResult check_epg_gradients(const GradientCheckSetup& setup) {
  const auto cfg = gradient_check_config(setup.config);
  const auto pipe = Pipeline<double>::build(cfg);
  const auto art = pipe.forward(synthetic_stages<double>(cfg, setup.seed));
  Rng rng(setup.seed ^ 0x455047ULL);

  detail::EpgPoint point{art.f_str, pipe.parameters().epg};
  const auto weights = detail::random_weights(art.f_epg.size(), rng);
  const FeatureMap<double> upstream(art.f_epg.shape(), weights);
  const auto g = epg_backward(art.cache->epg, point.params, upstream);
  detail::EpgPoint grad_point{g.f_str, point.params};
  grad_point.params.perturb = g.perturb;
  grad_point.params.gate = g.gate;

  const auto flat = detail::flatten(point, detail::visit_epg);
  const auto& x = flat.first;
  const auto& blocks = flat.second;
  const auto analytic = detail::flatten(grad_point, detail::visit_epg).first;
  // f_STR coordinates must stay inside the logistic map's domain under +-h.
  const auto coords = detail::pick_coords(
      blocks, rng, [](const detail::Block& b) { return b.name == "f_str" ? std::size_t{18} : std::size_t{4}; },
      [&](std::size_t i) {
        return analytic[i] != 0.0 && (i >= art.f_str.size() || (x[i] > 1e-3 && x[i] < 1.0 - 1e-3));
      });
  const auto zeros = detail::zero_coords(blocks, analytic, rng, 2);

  auto f = [&](const std::vector<double>& at) {
    detail::EpgPoint p = point;
    detail::unflatten(p, detail::visit_epg, at);
    const auto fwd = epg_forward(p.input, p.params);
    return oracle::Probe{detail::weighted_sum(weights, fwd.f_epg.data()), fwd.report.selected};
  };
  return detail::run_check(f, x, analytic, coords, kModuleGradRelTol * setup.tol_scale, zeros);
}

inline oracle::GradCheckResult check_pipeline_gradients(const GradientCheckSetup& setup) {
  const auto cfg = gradient_check_config(setup.config);
  const auto pipe = Pipeline<double>::build(cfg);
  detail::PipelinePoint point{synthetic_stages<double>(cfg, setup.seed), pipe.parameters()};
  const auto art = pipe.forward(point.inputs);
  Rng rng(setup.seed ^ 0x504950ULL);

  std::array<FeatureMap<double>, kStageCount> upstream;
  std::array<std::vector<double>, kStageCount> weights;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    weights[i] = detail::random_weights(art.outputs[i].size(), rng);
    upstream[i] = FeatureMap<double>(art.outputs[i].shape(), weights[i]);
  }
  const auto g = pipe.backward(art, upstream);
  detail::PipelinePoint grad_point{g.stage_inputs, g.params};

  const auto flat = detail::flatten(point, detail::visit_pipeline);
  const auto& x = flat.first;
  const auto& blocks = flat.second;
  const auto analytic = detail::flatten(grad_point, detail::visit_pipeline).first;
  // Downsampling reads only some input pixels, so many input entries have a
  // zero derivative; those go to the absolute check with the other zeros.
  const auto coords = detail::pick_coords(
      blocks, rng, [](const detail::Block& b) { return b.name == "input.f1" ? std::size_t{4} : std::size_t{1}; },
      [&](std::size_t i) { return analytic[i] != 0.0; });
  const auto zeros = detail::zero_coords(blocks, analytic, rng, 1);

  auto f = [&](const std::vector<double>& at) {
    detail::PipelinePoint p = point;
    detail::unflatten(p, detail::visit_pipeline, at);
    const auto run = pipe.with_parameters(p.params).forward(p.inputs);
    oracle::Probe probe;
    for (std::size_t i = 0; i < kStageCount; ++i) probe.value += detail::weighted_sum(weights[i], run.outputs[i].data());
    detail::append_graph_signature(probe.selection, run.graph);
    probe.selection.insert(probe.selection.end(), run.report.selected.begin(), run.report.selected.end());
    return probe;
  };
  return detail::run_check(f, x, analytic, coords, kPipelineGradRelTol * setup.tol_scale, zeros);
}

inline json grad_json(const oracle::GradCheckResult& r) {
  return {{"max_rel_error", r.max_rel_error}, {"worst_coord", r.worst}, {"analytic", r.analytic},
          {"numeric", r.numeric}, {"checked", r.checked}, {"selection_flips", r.flips},
          {"zero_checked", r.zero_checked}, {"zero_max_abs", r.zero_max_abs}};
}

inline GradientSuiteOutput gradient_suite(const GradientCheckSetup& setup) {
  GradientSuiteOutput out;
  out.suite.name = "gradients";
  out.str = check_str_gradients(setup);
  out.epg = check_epg_gradients(setup);
  out.pipeline = check_pipeline_gradients(setup);
  const std::pair<const char*, const oracle::GradCheckResult*> parts[] = {
      {"str_backward", &out.str}, {"epg_backward", &out.epg}, {"pipeline_backward", &out.pipeline}};
  for (const auto& [name, r] : parts) {
    out.suite.cases += r->checked;
    out.suite.max_error = std::max(out.suite.max_error, r->max_rel_error);
    if (!r->pass || r->checked < kMinGradCoords) {
      json d = grad_json(*r);
      d["check"] = name;
      d["seed"] = setup.seed;
      out.suite.fail(std::move(d));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural invariants on random configurations

inline PipelineConfig random_config(Rng& rng) {
  PipelineConfig c;
  const std::size_t sides[] = {64, 96, 128};
  c.H = sides[rng.below(3)];
  c.W = sides[rng.below(3)];
  for (auto& ch : c.stage_channels) ch = 1 + rng.below(12);
  c.Cs = 1 + rng.below(6);
  const std::size_t n = c.n_nodes();
  c.k = 1 + rng.below(std::min<std::size_t>(8, n - 1));
  c.dilation = 1 + rng.below(std::min<std::size_t>(3, (n - 1) / c.k));
  c.K = 1 + rng.below(c.fused_channels());
  c.alpha = rng.uniform(-2.0, 2.0);
  c.beta = rng.uniform(-2.0, 2.0);
  c.epsilon = rng.uniform(0.0, 0.5);
  c.entropy_sign = rng.below(2) == 0 ? EntropySign::literal : EntropySign::conventional;
  c.seed = rng.next_u64();
  c.precision = Precision::f32;
  return c;
}

/// Empty string when every invariant holds, otherwise the first violation.
template <typename T>
std::string check_run_invariants(const Pipeline<T>& pipe, const RunArtifacts<T>& art) {
  const auto& cfg = pipe.config();
  const std::size_t n = cfg.n_nodes();
  try {
    art.graph.validate(n);
  } catch (const Error& e) {
    return std::string("hypergraph: ") + e.what();
  }
  for (const auto& e : art.graph.edges) {
    if (e.neighbors.size() + 1 != cfg.k + 1) return "hyperedge size != k+1";
  }
  for (T v : art.f_str.data()) {
    if (!(v > T{0} && v < T{1})) return "f_STR value outside (0,1)";
  }
  for (T v : art.gates) {
    if (!(v > T{0} && v < T{1})) return "hyperedge gate outside (0,1)";
  }
  for (T v : art.cache->epg.gate.data()) {
    if (!(v > T{0} && v < T{1})) return "spatial gate outside (0,1)";
  }
  for (std::size_t i = 0; i < art.f_str.size(); ++i) {
    if (std::abs(art.f_epg.data()[i]) > std::abs(art.f_str.data()[i])) return "|f_EPG| > |f_STR|";
  }
  const auto shapes = pipe.output_shapes();
  for (std::size_t i = 0; i < kStageCount; ++i) {
    const Shape3 want{cfg.stage_channels[i], stage_extent(cfg.H, i + 1), stage_extent(cfg.W, i + 1)};
    if (art.outputs[i].shape() != want || shapes[i] != want) {
      return "stage " + std::to_string(i + 1) + " output shape " + art.outputs[i].shape().str();
    }
  }
  if (art.report.scores.size() != cfg.fused_channels() || art.report.selected.size() != cfg.K) {
    return "entropy report size";
  }
  return {};
}

inline SuiteResult shape_suite(std::uint64_t seed, std::size_t cases = kMinShapeCases) {
  SuiteResult r{"shapes"};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const auto cfg = random_config(rng);
    const std::uint64_t input_seed = rng.next_u64();
    ++r.cases;
    std::string problem;
    try {
      const auto pipe = Pipeline<float>::build(cfg);
      const auto art = pipe.forward(synthetic_stages<float>(cfg, input_seed));
      problem = check_run_invariants(pipe, art);
    } catch (const std::exception& e) {
      problem = e.what();
    }
    if (!problem.empty()) {
      r.fail({{"case", c}, {"config", to_config_text(cfg)}, {"input_seed", input_seed}, {"problem", problem}});
    }
  }
  return r;
}

struct Report {
  std::vector<SuiteResult> suites;
  bool passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
  }
};

/// Full selfcheck. `preset` picks the geometry used for the gradient checks.
inline Report run_all(const std::string& preset, double tol_scale = 1.0, std::uint64_t seed = 2026) {
  Report rep;
  rep.suites.push_back(knn_suite(seed));
  rep.suites.push_back(entropy_suite(seed + 1, tol_scale));
  rep.suites.push_back(topk_suite(seed + 2));
  rep.suites.push_back(conv_suite(seed + 3, tol_scale));
  GradientCheckSetup setup;
  setup.config = preset_config(preset);
  setup.tol_scale = tol_scale;
  rep.suites.push_back(gradient_suite(setup).suite);
  rep.suites.push_back(shape_suite(seed + 4));
  return rep;
}

}  // namespace dtea::selfcheck
