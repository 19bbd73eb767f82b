// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Entropic perturbation gating. One logistic-map step perturbs f_STR, a
// depthwise conv mixes each channel's neighbourhood, and the per-channel
// spatial mean of P ln P (P = sigmoid of the perturbed map) scores channels.
// The K lowest-scoring channels drive a 7x7 spatial attention gate.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "dtea/error.hpp"
#include "dtea/parallel.hpp"
#include "dtea/tensor.hpp"

namespace dtea {

inline constexpr double kDefaultMu = 3.99;
inline constexpr double kLogisticDomainSlack = 1e-6;

/// literal: rank channels by E = mean(P ln P) as written.
/// conventional: rank by Shannon entropy -E.
enum class EntropySign { literal, conventional };

inline std::string_view to_string(EntropySign s) {
  return s == EntropySign::literal ? "literal" : "conventional";
}

inline EntropySign parse_entropy_sign(std::string_view text) {
  if (text == "literal") return EntropySign::literal;
  if (text == "conventional") return EntropySign::conventional;
  throw ConfigError("entropy_sign must be 'literal' or 'conventional', got '" + std::string(text) + "'");
}

template <typename T>
struct EpgParams {
  T mu = static_cast<T>(kDefaultMu);
  std::size_t K = 64;
  EntropySign sign = EntropySign::literal;
  ConvKernel<T> perturb;  // 3x3 depthwise, C -> C, padding 1
  ConvKernel<T> gate;     // 7x7, K -> 1, padding 3
};

template <typename T>
EpgParams<T> make_epg_params(std::size_t channels, std::size_t K, T mu, EntropySign sign, Rng& rng) {
  EpgParams<T> p;
  p.mu = mu;
  p.K = K;
  p.sign = sign;
  p.perturb = seeded_init<T>(channels, channels, 3, 3, rng, channels);
  p.gate = seeded_init<T>(1, K, 7, 7, rng);
  return p;
}

struct EntropyReport {
  std::vector<double> scores;     // E per channel, literal sign
  std::vector<std::size_t> selected;  // ascending channel indices
  double mu = kDefaultMu;
  std::size_t K = 0;
  EntropySign sign = EntropySign::literal;

  std::vector<double> conventional_scores() const {
    std::vector<double> out(scores.size());
    std::transform(scores.begin(), scores.end(), out.begin(), [](double v) { return -v; });
    return out;
  }

  friend bool operator==(const EntropyReport&, const EntropyReport&) = default;
};

template <typename T>
void check_epg_params(const EpgParams<T>& p, std::size_t channels) {
  if (!(p.mu > T{0} && p.mu <= T{4})) throw DomainError("mu must lie in (0, 4]");
  if (p.K < 1 || p.K > channels) {
    throw DomainError("K=" + std::to_string(p.K) + " outside 1.." + std::to_string(channels));
  }
  p.perturb.validate();
  if (p.perturb.in_channels != channels || p.perturb.out_channels != channels ||
      p.perturb.groups != channels) {
    throw ShapeError("perturb kernel must be depthwise over " + std::to_string(channels) + " channels");
  }
  p.gate.validate();
  if (p.gate.in_channels != p.K || p.gate.out_channels != 1) {
    throw ShapeError("gate kernel must map K=" + std::to_string(p.K) + " channels to 1");
  }
}

/// mu * x * (1 - x) elementwise. Inputs must lie in [0, 1].
template <typename T>
FeatureMap<T> logistic_step(const FeatureMap<T>& f_str, T mu) {
  FeatureMap<T> out(f_str.channels(), f_str.height(), f_str.width());
  const T slack = static_cast<T>(kLogisticDomainSlack);
  auto src = f_str.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const T x = src[i];
    if (!(x >= -slack && x <= T{1} + slack)) {
      throw DomainError("logistic map input " + std::to_string(static_cast<double>(x)) +
                        " outside [0, 1]");
    }
    dst[i] = x * mu * (T{1} - x);
  }
  return out;
}

template <typename T>
FeatureMap<T> chaotic_perturb(const FeatureMap<T>& f_str, const EpgParams<T>& params) {
  return conv2d(logistic_step(f_str, params.mu), params.perturb, params.perturb.kernel_h / 2);
}

/// E_c = mean over (h, w) of P ln P with P = clamp(sigmoid(f_chaotic)).
template <typename T>
std::vector<double> channel_entropy(const FeatureMap<T>& f_chaotic) {
  std::vector<double> scores(f_chaotic.channels());
  parallel_for(f_chaotic.channels(), [&](std::size_t c) {
    double acc = 0.0;
    for (T v : f_chaotic.channel(c)) {
      const double p = sigmoid(static_cast<double>(v));
      acc += p * std::log(p);
    }
    scores[c] = acc / static_cast<double>(f_chaotic.plane());
  });
  return scores;
}

/// Indices of the K smallest keys (key = score, or -score under the
/// conventional sign), ties to the lower index, returned ascending.
inline std::vector<std::size_t> lowest_k(const std::vector<double>& scores, std::size_t K,
                                         EntropySign sign = EntropySign::literal) {
  if (K < 1 || K > scores.size()) {
    throw DomainError("K=" + std::to_string(K) + " outside 1.." + std::to_string(scores.size()));
  }
  const double s = sign == EntropySign::literal ? 1.0 : -1.0;
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(K), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double ka = s * scores[a];
                      const double kb = s * scores[b];
                      return ka < kb || (ka == kb && a < b);
                    });
  idx.resize(K);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename T>
struct Selection {
  FeatureMap<T> subset;
  std::vector<std::size_t> indices;
};

template <typename T>
FeatureMap<T> gather_channels(const FeatureMap<T>& input, const std::vector<std::size_t>& indices) {
  FeatureMap<T> out(indices.size(), input.height(), input.width());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    auto src = input.channel(indices[j]);
    std::copy(src.begin(), src.end(), out.channel(j).begin());
  }
  return out;
}

template <typename T>
Selection<T> select_low_entropy(const FeatureMap<T>& f_str, const std::vector<double>& scores,
                                std::size_t K, EntropySign sign = EntropySign::literal) {
  if (scores.size() != f_str.channels()) throw ShapeError("one entropy score per channel required");
  auto indices = lowest_k(scores, K, sign);
  return {gather_channels(f_str, indices), std::move(indices)};
}

/// sigmoid(Conv7x7(subset)), a 1 x H x W attention map.
template <typename T>
FeatureMap<T> spatial_gate(const FeatureMap<T>& subset, const EpgParams<T>& params) {
  if (subset.channels() != params.gate.in_channels) {
    throw ShapeError("spatial_gate: subset has " + std::to_string(subset.channels()) +
                     " channels, gate kernel expects " + std::to_string(params.gate.in_channels));
  }
  return sigmoid(conv2d(subset, params.gate, params.gate.kernel_h / 2));
}

template <typename T>
struct EpgForward {
  FeatureMap<T> input;
  FeatureMap<T> chaotic;
  FeatureMap<T> subset;
  FeatureMap<T> gate;
  FeatureMap<T> f_epg;
  EntropyReport report;

  bool has_cache() const { return !f_epg.empty() && !input.empty(); }
};

template <typename T>
EpgForward<T> epg_forward(const FeatureMap<T>& f_str, const EpgParams<T>& params) {
  check_epg_params(params, f_str.channels());
  EpgForward<T> fwd;
  fwd.input = f_str;
  fwd.chaotic = chaotic_perturb(f_str, params);
  fwd.report.scores = channel_entropy(fwd.chaotic);
  fwd.report.mu = static_cast<double>(params.mu);
  fwd.report.K = params.K;
  fwd.report.sign = params.sign;
  auto sel = select_low_entropy(f_str, fwd.report.scores, params.K, params.sign);
  fwd.report.selected = std::move(sel.indices);
  fwd.subset = std::move(sel.subset);
  fwd.gate = spatial_gate(fwd.subset, params);
  fwd.f_epg = FeatureMap<T>(f_str.channels(), f_str.height(), f_str.width());
  const std::size_t plane = f_str.plane();
  for (std::size_t c = 0; c < f_str.channels(); ++c) {
    auto src = f_str.channel(c);
    auto dst = fwd.f_epg.channel(c);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * fwd.gate.data()[i];
  }
  return fwd;
}

template <typename T>
struct EpgGradients {
  FeatureMap<T> f_str;
  ConvKernel<T> perturb;  // identically zero: the perturbation only feeds the frozen selection
  ConvKernel<T> gate;
};

/// Reverse-mode derivative of epg_forward with the selected set frozen.
template <typename T>
EpgGradients<T> epg_backward(const EpgForward<T>& fwd, const EpgParams<T>& params,
                             const FeatureMap<T>& grad_f_epg) {
  if (!fwd.has_cache()) throw StateError("epg_backward called without forward cache");
  check_same_shape(grad_f_epg, fwd.f_epg, "epg_backward upstream gradient");
  const std::size_t plane = fwd.input.plane();
  EpgGradients<T> g;
  g.f_str = FeatureMap<T>(fwd.input.channels(), fwd.input.height(), fwd.input.width());
  g.perturb = ConvKernel<T>::zeros(params.perturb.out_channels, params.perturb.in_channels,
                                   params.perturb.kernel_h, params.perturb.kernel_w,
                                   params.perturb.groups);

  FeatureMap<T> grad_pre(1, fwd.input.height(), fwd.input.width());
  auto gate = fwd.gate.data();
  for (std::size_t c = 0; c < fwd.input.channels(); ++c) {
    auto up = grad_f_epg.channel(c);
    auto x = fwd.input.channel(c);
    auto gx = g.f_str.channel(c);
    for (std::size_t i = 0; i < plane; ++i) {
      gx[i] = up[i] * gate[i];
      grad_pre.data()[i] += up[i] * x[i];
    }
  }
  for (std::size_t i = 0; i < plane; ++i) grad_pre.data()[i] *= sigmoid_derivative(gate[i]);

  auto conv_g = conv2d_backward(fwd.subset, params.gate, params.gate.kernel_h / 2, 1, grad_pre);
  g.gate = std::move(conv_g.kernel);
  for (std::size_t j = 0; j < fwd.report.selected.size(); ++j) {
    auto src = conv_g.input.channel(j);
    auto dst = g.f_str.channel(fwd.report.selected[j]);
    for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
  }
  return g;
}

template <typename T>
EpgGradients<T> epg_backward(const FeatureMap<T>& f_str, const EpgParams<T>& params,
                             const FeatureMap<T>& grad_f_epg) {
  return epg_backward(epg_forward(f_str, params), params, grad_f_epg);
}

}  // namespace dtea
