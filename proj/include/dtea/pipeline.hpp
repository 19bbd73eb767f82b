// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Composition root for the skip connection: preproc -> STR -> EPG ->
// postproc, with deterministic parameter initialisation and a full backward
// pass (hypergraph topology and channel selection frozen).

#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dtea/config.hpp"
#include "dtea/epg.hpp"
#include "dtea/postproc.hpp"
#include "dtea/preproc.hpp"
#include "dtea/str.hpp"
#include "dtea/tensor.hpp"

namespace dtea {

template <typename T>
struct PipelineParameters {
  PreprocParams<T> preproc;
  StrParams<T> str;
  EpgParams<T> epg;
  PostprocParams<T> postproc;
};

/// Visits every differentiable parameter tensor as (name, span). The order
/// is fixed and names are stable, e.g. "str.alpha" or "postproc.restore2.weight".
template <typename Params, typename Fn>
void for_each_parameter(Params& p, Fn&& fn) {
  auto kernel = [&](const std::string& prefix, auto& k) {
    fn(prefix + ".weight", std::span(k.weights));
    fn(prefix + ".bias", std::span(k.bias));
  };
  for (std::size_t i = 0; i < kStageCount; ++i) {
    kernel("preproc.compress" + std::to_string(i + 1), p.preproc.stages[i].compress);
  }
  kernel("str.refine", p.str.refine);
  fn(std::string("str.norm.scale"), std::span(p.str.norm_scale));
  fn(std::string("str.norm.shift"), std::span(p.str.norm_shift));
  fn(std::string("str.alpha"), std::span(&p.str.alpha, 1));
  fn(std::string("str.beta"), std::span(&p.str.beta, 1));
  fn(std::string("str.epsilon"), std::span(&p.str.epsilon, 1));
  kernel("str.update", p.str.update);
  kernel("epg.perturb", p.epg.perturb);
  kernel("epg.gate", p.epg.gate);
  for (std::size_t i = 0; i < kStageCount; ++i) {
    kernel("postproc.restore" + std::to_string(i + 1), p.postproc.restore[i]);
  }
}

/// Hyperparameters that have no gradient; asking for one is an error.
inline bool is_fixed_hyperparameter(std::string_view name) {
  return name == "mu" || name == "K" || name == "k" || name == "dilation" || name == "epg.mu" ||
         name == "epg.K" || name == "str.k" || name == "str.dilation";
}

template <typename T>
std::span<const T> find_parameter(const PipelineParameters<T>& p, std::string_view name) {
  if (is_fixed_hyperparameter(name)) {
    throw DomainError("'" + std::string(name) + "' is a fixed hyperparameter and has no gradient");
  }
  std::span<const T> found;
  bool hit = false;
  for_each_parameter(p, [&](const std::string& n, std::span<const T> s) {
    if (n == name) {
      found = s;
      hit = true;
    }
  });
  if (!hit) throw DomainError("unknown parameter '" + std::string(name) + "'");
  return found;
}

struct StageTimings {
  double preproc_ms = 0.0;
  double str_ms = 0.0;
  double epg_ms = 0.0;
  double postproc_ms = 0.0;
  double total_ms = 0.0;
};

template <typename T>
struct ForwardCache {
  std::array<FeatureMap<T>, kStageCount> stage_inputs;
  std::array<FeatureMap<T>, kStageCount> aligned;
  StrForward<T> str;
  EpgForward<T> epg;
};

template <typename T>
struct RunArtifacts {
  std::array<FeatureMap<T>, kStageCount> outputs;
  FeatureMap<T> f_str;
  FeatureMap<T> f_epg;
  Hypergraph graph;
  std::vector<T> gates;  // n_edges x k, sigmoid(alpha * c_j + beta)
  EntropyReport report;
  StageTimings timings;
  std::shared_ptr<const ForwardCache<T>> cache;
};

template <typename T>
struct PipelineGradients {
  std::array<FeatureMap<T>, kStageCount> stage_inputs;
  PipelineParameters<T> params;

  std::span<const T> get(std::string_view name) const { return find_parameter(params, name); }
};

template <typename T>
class Pipeline {
 public:
  static Pipeline build(const PipelineConfig& config) {
    config.validate();
    Pipeline p;
    p.config_ = config;
    Rng rng(config.seed);
    auto& P = p.params_;
    P.preproc = make_preproc_params<T>(config.H, config.W, config.stage_channels, config.Cs, rng);
    const std::size_t C = config.fused_channels();
    P.str = make_str_params<T>(C, config.k, config.dilation, static_cast<T>(config.alpha),
                               static_cast<T>(config.beta), static_cast<T>(config.epsilon), rng);
    P.epg = make_epg_params<T>(C, config.K, static_cast<T>(config.mu), config.entropy_sign, rng);
    P.postproc = make_postproc_params<T>(config.H, config.W, config.stage_channels, config.Cs, rng);
    return p;
  }

  const PipelineConfig& config() const { return config_; }
  const PipelineParameters<T>& parameters() const { return params_; }

  /// Copy of this pipeline with replaced parameter values (same geometry).
  Pipeline with_parameters(PipelineParameters<T> params) const {
    std::vector<std::size_t> want;
    for_each_parameter(params_, [&](const std::string&, std::span<const T> s) { want.push_back(s.size()); });
    std::size_t i = 0;
    for_each_parameter(params, [&](const std::string& name, std::span<const T> s) {
      if (s.size() != want[i++]) throw ShapeError("parameter '" + name + "' changed size");
    });
    Pipeline p = *this;
    p.params_ = std::move(params);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter(params_, [&](const std::string&, std::span<const T> s) { n += s.size(); });
    return n;
  }

  std::array<Shape3, kStageCount> input_shapes() const {
    std::array<Shape3, kStageCount> s;
    for (std::size_t i = 0; i < kStageCount; ++i) s[i] = params_.preproc.stages[i].input_shape();
    return s;
  }

  std::array<Shape3, kStageCount> output_shapes() const {
    std::array<Shape3, kStageCount> s;
    for (std::size_t i = 0; i < kStageCount; ++i) {
      s[i] = {config_.stage_channels[i], params_.postproc.target_h[i], params_.postproc.target_w[i]};
    }
    return s;
  }

  RunArtifacts<T> forward(const std::array<FeatureMap<T>, kStageCount>& stages) const {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
    for (std::size_t i = 0; i < kStageCount; ++i) check_stage_input(stages[i], params_.preproc.stages[i]);

    auto cache = std::make_shared<ForwardCache<T>>();
    cache->stage_inputs = stages;
    RunArtifacts<T> art;

    const auto t0 = clock::now();
    parallel_for(kStageCount, [&](std::size_t i) {
      cache->aligned[i] = compress_and_align(stages[i], params_.preproc.stages[i], params_.preproc);
    });
    const auto f_concat =
        fuse_scales(std::span<const FeatureMap<T>>(cache->aligned), params_.preproc);
    const auto t1 = clock::now();
    cache->str = str_forward(f_concat, params_.str);
    const auto t2 = clock::now();
    cache->epg = epg_forward(cache->str.f_str, params_.epg);
    const auto t3 = clock::now();
    art.outputs = redistribute(cache->epg.f_epg, cache->aligned, params_.postproc);
    const auto t4 = clock::now();

    art.f_str = cache->str.f_str;
    art.f_epg = cache->epg.f_epg;
    art.graph = cache->str.graph;
    art.gates = cache->str.edges.gates;
    art.report = cache->epg.report;
    art.timings = {ms(t1 - t0), ms(t2 - t1), ms(t3 - t2), ms(t4 - t3), ms(t4 - t0)};
    art.cache = std::move(cache);
    return art;
  }

  PipelineGradients<T> backward(const RunArtifacts<T>& art,
                                const std::array<FeatureMap<T>, kStageCount>& upstream) const {
    if (!art.cache) throw StateError("pipeline backward needs the forward cache");
    const auto& cache = *art.cache;
    const auto out_shapes = output_shapes();
    for (std::size_t i = 0; i < kStageCount; ++i) {
      if (upstream[i].shape() != out_shapes[i]) {
        throw ShapeError("upstream gradient for stage " + std::to_string(i + 1) + " is " +
                         upstream[i].shape().str() + ", expected " + out_shapes[i].str());
      }
    }
    PipelineGradients<T> g;
    auto post = redistribute_backward(cache.epg.f_epg, cache.aligned, params_.postproc, upstream);
    auto epg = epg_backward(cache.epg, params_.epg, post.f_epg);
    auto str = str_backward(cache.str, params_.str, epg.f_str);

    const std::vector<std::size_t> groups(kStageCount, config_.Cs);
    auto concat_parts = split_channels(str.f_concat, std::span<const std::size_t>(groups));

    g.params = params_;
    for (std::size_t i = 0; i < kStageCount; ++i) {
      add_inplace(concat_parts[i], post.aligned[i]);
      auto sg = compress_and_align_backward(cache.stage_inputs[i], params_.preproc.stages[i], concat_parts[i]);
      g.stage_inputs[i] = std::move(sg.input);
      g.params.preproc.stages[i].compress = std::move(sg.compress);
      g.params.postproc.restore[i] = std::move(post.restore[i]);
    }
    g.params.str.refine = std::move(str.refine);
    g.params.str.update = std::move(str.update);
    g.params.str.norm_scale = std::move(str.norm_scale);
    g.params.str.norm_shift = std::move(str.norm_shift);
    g.params.str.alpha = str.alpha;
    g.params.str.beta = str.beta;
    g.params.str.epsilon = str.epsilon;
    g.params.epg.perturb = std::move(epg.perturb);
    g.params.epg.gate = std::move(epg.gate);
    return g;
  }

 private:
  Pipeline() = default;

  PipelineConfig config_;
  PipelineParameters<T> params_;
};

/// Stage features drawn uniformly from [0, 1) in stage order, channel-major.
template <typename T>
std::array<FeatureMap<T>, kStageCount> synthetic_stages(const PipelineConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::array<FeatureMap<T>, kStageCount> out;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    out[i] = FeatureMap<T>(config.stage_channels[i], stage_extent(config.H, i + 1),
                           stage_extent(config.W, i + 1));
    for (T& v : out[i].data()) v = static_cast<T>(rng.uniform());
  }
  return out;
}

}  // namespace dtea
