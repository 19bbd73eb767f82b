// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Slow reference implementations used by the tests and `dtea selfcheck`.
// Nothing in here calls into the main kernels; only the containers are
// shared. Everything is evaluated in double.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dtea/error.hpp"
#include "dtea/str.hpp"
#include "dtea/tensor.hpp"

namespace dtea::oracle {

/// Full O(n^2) distance matrix, stable sort per centre.
template <typename T>
Hypergraph knn_bruteforce(const NodeMatrix<T>& nodes, std::size_t k, std::size_t dilation) {
  const std::size_t n = nodes.n_nodes();
  const std::size_t D = nodes.dim;
  if (k == 0 || dilation == 0 || k * dilation >= n) {
    throw DomainError("knn_bruteforce: need k >= 1, d >= 1 and k*d < n");
  }
  std::vector<double> x(nodes.features.begin(), nodes.features.end());
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t d = 0; d < D; ++d) ab += x[i * D + d] * x[j * D + d];
      for (std::size_t d = 0; d < D; ++d) aa += x[i * D + d] * x[i * D + d];
      for (std::size_t d = 0; d < D; ++d) bb += x[j * D + d] * x[j * D + d];
      const double sim = (aa == 0.0 || bb == 0.0) ? 0.0 : ab / (std::sqrt(aa) * std::sqrt(bb));
      dist[i * n + j] = 1.0 - sim;
    }
  }
  Hypergraph g{nodes.grid_h, nodes.grid_w, k, dilation, {}};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[i * n + a] < dist[i * n + b]; });
    Hyperedge e{i, {}};
    for (std::size_t r = 0; r < k; ++r) e.neighbors.push_back(order[r * dilation]);
    g.edges.push_back(std::move(e));
  }
  return g;
}

/// Per-channel mean of P ln P, P = sigmoid clamped to [1e-7, 1 - 1e-7].
template <typename T>
std::vector<double> entropy_naive(const FeatureMap<T>& f_chaotic) {
  std::vector<double> out;
  const std::size_t H = f_chaotic.height(), W = f_chaotic.width();
  for (std::size_t c = 0; c < f_chaotic.channels(); ++c) {
    double sum = 0.0;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double v = static_cast<double>(f_chaotic(c, y, x));
        double p = 1.0 / (1.0 + std::exp(-v));
        if (p < 1e-7) p = 1e-7;
        if (p > 1.0 - 1e-7) p = 1.0 - 1e-7;
        sum += p * std::log(p);
      }
    }
    out.push_back(sum / static_cast<double>(H * W));
  }
  return out;
}

inline std::vector<std::size_t> topk_naive(const std::vector<double>& scores, std::size_t K) {
  if (K < 1 || K > scores.size()) throw DomainError("topk_naive: K out of range");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  });
  std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K));
  std::sort(picked.begin(), picked.end());
  return picked;
}

template <typename T>
FeatureMap<double> conv2d_naive(const FeatureMap<T>& input, const ConvKernel<T>& kernel,
                                std::size_t padding, std::size_t stride) {
  if (input.channels() != kernel.in_channels) throw ShapeError("conv2d_naive: channel mismatch");
  if (stride == 0) throw ShapeError("conv2d_naive: stride must be >= 1");
  const auto H = static_cast<long>(input.height());
  const auto W = static_cast<long>(input.width());
  const auto P = static_cast<long>(padding);
  const auto S = static_cast<long>(stride);
  const auto KH = static_cast<long>(kernel.kernel_h);
  const auto KW = static_cast<long>(kernel.kernel_w);
  if (H + 2 * P < KH || W + 2 * P < KW) throw ShapeError("conv2d_naive: kernel larger than padded input");
  const long OH = (H + 2 * P - KH) / S + 1;
  const long OW = (W + 2 * P - KW) / S + 1;
  const std::size_t in_pg = kernel.in_channels / kernel.groups;
  const std::size_t out_pg = kernel.out_channels / kernel.groups;
  FeatureMap<double> out(kernel.out_channels, static_cast<std::size_t>(OH), static_cast<std::size_t>(OW));
  for (std::size_t o = 0; o < kernel.out_channels; ++o) {
    const std::size_t g = o / out_pg;
    for (long oy = 0; oy < OH; ++oy) {
      for (long ox = 0; ox < OW; ++ox) {
        double acc = static_cast<double>(kernel.bias[o]);
        for (std::size_t il = 0; il < in_pg; ++il) {
          for (long ky = 0; ky < KH; ++ky) {
            for (long kx = 0; kx < KW; ++kx) {
              const long iy = oy * S - P + ky;
              const long ix = ox * S - P + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const std::size_t w_at = ((o * in_pg + il) * kernel.kernel_h + static_cast<std::size_t>(ky)) *
                                           kernel.kernel_w + static_cast<std::size_t>(kx);
              acc += static_cast<double>(kernel.weights[w_at]) *
                     static_cast<double>(input(g * in_pg + il, static_cast<std::size_t>(iy),
                                               static_cast<std::size_t>(ix)));
            }
          }
        }
        out(o, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) = acc;
      }
    }
  }
  return out;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-12});
}

inline double fd_step(double x) { return 1e-5 * std::max(1.0, std::abs(x)); }

/// Function value plus a signature of every discrete choice made while
/// computing it (KNN neighbours, selected channels). Perturbations that
/// change the signature are reported as selection flips.
struct Probe {
  double value = 0.0;
  std::vector<std::size_t> selection;
};

struct FdEntry {
  std::size_t coord = 0;
  double estimate = 0.0;
  bool selection_flip = false;
};

/// Central differences at the requested coordinates of x.
template <typename Fn>
std::vector<FdEntry> finite_diff_grad(Fn&& f, std::vector<double> x, std::span<const std::size_t> coords) {
  auto eval = [&](const std::vector<double>& at) -> Probe {
    Probe p;
    if constexpr (std::is_same_v<std::invoke_result_t<Fn&, const std::vector<double>&>, Probe>) {
      p = f(at);
    } else {
      p.value = static_cast<double>(f(at));
    }
    if (!std::isfinite(p.value)) throw NumericError("finite_diff_grad: non-finite function value");
    return p;
  };
  const Probe base = eval(x);
  std::vector<FdEntry> out;
  out.reserve(coords.size());
  for (std::size_t c : coords) {
    if (c >= x.size()) throw ShapeError("finite_diff_grad: coordinate out of range");
    const double x0 = x[c];
    const double h = fd_step(x0);
    x[c] = x0 + h;
    const Probe plus = eval(x);
    x[c] = x0 - h;
    const Probe minus = eval(x);
    x[c] = x0;
    FdEntry e{c, (plus.value - minus.value) / (2.0 * h), false};
    e.selection_flip = plus.selection != base.selection || minus.selection != base.selection;
    out.push_back(e);
  }
  return out;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::size_t flips = 0;
  std::size_t zero_checked = 0;  // coordinates with an exactly zero analytic derivative
  double zero_max_abs = 0.0;     // largest |numeric| among those
  bool pass = true;
};

/// analytic[i] is the analytic derivative at fd[i].coord.
inline GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const FdEntry> fd,
                                         double threshold) {
  if (analytic.size() != fd.size()) throw ShapeError("compare_gradients: length mismatch");
  GradCheckResult r;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    if (fd[i].selection_flip) {
      ++r.flips;
      continue;
    }
    ++r.checked;
    const double err = relative_error(analytic[i], fd[i].estimate);
    if (r.checked == 1 || err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = fd[i].coord;
      r.analytic = analytic[i];
      r.numeric = fd[i].estimate;
    }
  }
  r.pass = r.max_rel_error <= threshold;
  return r;
}

}  // namespace dtea::oracle
