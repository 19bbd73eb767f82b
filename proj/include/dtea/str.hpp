// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Semantic topology reconfiguration: the fused feature map is refined, lifted
// to one node per grid cell, wired into a hypergraph by dilated cosine KNN
// and updated with hyperedge convolution followed by a reverse node update.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dtea/error.hpp"
#include "dtea/parallel.hpp"
#include "dtea/tensor.hpp"

namespace dtea {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kPositionBase = 10000.0;

struct GridCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

/// Row-major node matrix: node index = row * grid_w + col.
template <typename T>
struct NodeMatrix {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t dim = 0;
  std::vector<T> features;  // n_nodes x dim
  std::vector<GridCoord> coords;

  std::size_t n_nodes() const { return coords.size(); }
  std::span<T> node(std::size_t i) { return std::span<T>(features).subspan(i * dim, dim); }
  std::span<const T> node(std::size_t i) const {
    return std::span<const T>(features).subspan(i * dim, dim);
  }

  /// Builds a matrix from raw features laid out n x dim, with a 1 x n grid.
  static NodeMatrix from_rows(std::size_t n, std::size_t dim, std::vector<T> features) {
    if (features.size() != n * dim) throw ShapeError("node features must be n x dim");
    NodeMatrix m{1, n, dim, std::move(features), {}};
    for (std::size_t i = 0; i < n; ++i) m.coords.push_back({0, i});
    return m;
  }
};

struct Hyperedge {
  std::size_t center = 0;
  std::vector<std::size_t> neighbors;  // ordered by rank
  friend bool operator==(const Hyperedge&, const Hyperedge&) = default;
};

/// One hyperedge per node; hyperedge h is centred on node h.
struct Hypergraph {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t k = 0;
  std::size_t dilation = 1;
  std::vector<Hyperedge> edges;

  std::size_t n_nodes() const { return edges.size(); }

  void validate(std::size_t n_nodes) const {
    if (edges.size() != n_nodes) {
      throw ShapeError("hypergraph has " + std::to_string(edges.size()) + " hyperedges for " +
                       std::to_string(n_nodes) + " nodes");
    }
    std::vector<char> seen(n_nodes, 0);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto& edge = edges[e];
      if (edge.center != e) throw ShapeError("hyperedge " + std::to_string(e) + " has wrong center");
      if (edge.neighbors.size() != k) {
        throw ShapeError("hyperedge " + std::to_string(e) + " has " +
                         std::to_string(edge.neighbors.size()) + " neighbors, expected " +
                         std::to_string(k));
      }
      std::fill(seen.begin(), seen.end(), 0);
      seen[e] = 1;
      for (std::size_t j : edge.neighbors) {
        if (j >= n_nodes) throw ShapeError("hyperedge neighbor index out of range");
        if (seen[j]) throw ShapeError("hyperedge " + std::to_string(e) + " repeats a node");
        seen[j] = 1;
      }
    }
  }

  /// For each node, the ascending list of hyperedges that contain it.
  std::vector<std::vector<std::size_t>> membership() const {
    std::vector<std::vector<std::size_t>> in(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      in[edges[e].center].push_back(e);
      for (std::size_t j : edges[e].neighbors) in[j].push_back(e);
    }
    for (auto& list : in) std::sort(list.begin(), list.end());
    return in;
  }

  friend bool operator==(const Hypergraph&, const Hypergraph&) = default;
};

template <typename T>
struct StrParams {
  T alpha{0};
  T beta{0};
  T epsilon{0};
  std::size_t k = 8;
  std::size_t dilation = 1;
  ConvKernel<T> refine;  // 3x3, C -> C, padding 1
  ConvKernel<T> update;  // 1x1 over the node feature dim, D -> D
  std::vector<T> norm_scale;
  std::vector<T> norm_shift;
};

template <typename T>
StrParams<T> make_str_params(std::size_t channels, std::size_t k, std::size_t dilation, T alpha,
                             T beta, T epsilon, Rng& rng) {
  StrParams<T> p;
  p.alpha = alpha;
  p.beta = beta;
  p.epsilon = epsilon;
  p.k = k;
  p.dilation = dilation;
  p.refine = seeded_init<T>(channels, channels, 3, 3, rng);
  p.update = seeded_init<T>(channels, channels, 1, 1, rng);
  p.norm_scale.assign(channels, T{1});
  p.norm_shift.assign(channels, T{0});
  return p;
}

/// Per-hyperedge aggregates h_e together with the similarities and gates
/// that produced them (both n_edges x k).
template <typename T>
struct EdgeFeatures {
  std::size_t dim = 0;
  std::size_t k = 0;
  std::vector<T> h;
  std::vector<T> similarity;
  std::vector<T> gates;

  std::span<const T> edge(std::size_t e) const { return std::span<const T>(h).subspan(e * dim, dim); }
  std::span<const T> edge_gates(std::size_t e) const {
    return std::span<const T>(gates).subspan(e * k, k);
  }
};

namespace detail {

template <typename T>
double squared_norm(std::span<const T> a) {
  double s = 0.0;
  for (T v : a) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

// Cosine similarity with precomputed norms; zero if either vector is zero.
inline double cosine_from_parts(double dot, double norm_a, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return dot / (norm_a * norm_b);
}

}  // namespace detail

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  return detail::cosine_from_parts(detail::dot(a, b), std::sqrt(detail::squared_norm(a)),
                                   std::sqrt(detail::squared_norm(b)));
}

template <typename T>
struct InstanceNormTrace {
  FeatureMap<T> normalized;  // (v - mean) * inv_std
  std::vector<T> inv_std;
};

template <typename T>
InstanceNormTrace<T> instance_normalize(const FeatureMap<T>& v) {
  InstanceNormTrace<T> t{FeatureMap<T>(v.channels(), v.height(), v.width()),
                         std::vector<T>(v.channels())};
  const double n = static_cast<double>(v.plane());
  for (std::size_t c = 0; c < v.channels(); ++c) {
    auto src = v.channel(c);
    double mean = 0.0;
    for (T x : src) mean += static_cast<double>(x);
    mean /= n;
    double var = 0.0;
    for (T x : src) {
      const double d = static_cast<double>(x) - mean;
      var += d * d;
    }
    var /= n;
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kNormEpsilon));
    const T m = static_cast<T>(mean);
    t.inv_std[c] = inv;
    auto dst = t.normalized.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - m) * inv;
  }
  return t;
}

/// 3x3 conv (padding 1) followed by instance normalisation with a learned
/// per-channel scale and shift.
template <typename T>
FeatureMap<T> refine(const FeatureMap<T>& f_concat, const StrParams<T>& params) {
  if (params.norm_scale.size() != f_concat.channels() || params.norm_shift.size() != f_concat.channels()) {
    throw ShapeError("refine: norm parameters do not match " + std::to_string(f_concat.channels()) +
                     " channels");
  }
  auto norm = instance_normalize(conv2d(f_concat, params.refine, 1));
  FeatureMap<T> out = std::move(norm.normalized);
  for (std::size_t c = 0; c < out.channels(); ++c) {
    for (T& x : out.channel(c)) x = params.norm_scale[c] * x + params.norm_shift[c];
  }
  return out;
}

/// Fixed 2-D sinusoidal encoding, n_nodes x dim. The first dim/2 entries
/// encode the row and the last dim/2 the column; within each half entry j
/// is sin (j even) or cos (j odd) of coord/side * 10000^(-2*floor(j/2)/half).
template <typename T>
std::vector<T> position_encoding(std::size_t grid_h, std::size_t grid_w, std::size_t dim) {
  if (dim % 2 != 0) throw ShapeError("position encoding needs an even feature dim, got " + std::to_string(dim));
  const std::size_t half = dim / 2;
  std::vector<T> pe(grid_h * grid_w * dim);
  auto fill_axis = [&](T* dst, double pos) {
    for (std::size_t j = 0; j < half; ++j) {
      const double freq = std::pow(kPositionBase, -2.0 * static_cast<double>(j / 2) / static_cast<double>(half));
      dst[j] = static_cast<T>(j % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
    }
  };
  for (std::size_t r = 0; r < grid_h; ++r) {
    for (std::size_t c = 0; c < grid_w; ++c) {
      T* node = pe.data() + (r * grid_w + c) * dim;
      fill_axis(node, static_cast<double>(r) / static_cast<double>(grid_h));
      fill_axis(node + half, static_cast<double>(c) / static_cast<double>(grid_w));
    }
  }
  return pe;
}

template <typename T>
NodeMatrix<T> to_nodes(const FeatureMap<T>& refined) {
  const std::size_t D = refined.channels();
  const auto pe = position_encoding<T>(refined.height(), refined.width(), D);
  NodeMatrix<T> nodes{refined.height(), refined.width(), D, std::vector<T>(refined.size()), {}};
  nodes.coords.reserve(refined.plane());
  for (std::size_t r = 0; r < refined.height(); ++r) {
    for (std::size_t c = 0; c < refined.width(); ++c) nodes.coords.push_back({r, c});
  }
  const std::size_t n = refined.plane();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < D; ++d) {
      nodes.features[i * D + d] = refined.data()[d * n + i] + pe[i * D + d];
    }
  }
  return nodes;
}

/// Inverse of the to_nodes layout (position encodings are kept).
template <typename T>
FeatureMap<T> from_nodes(const NodeMatrix<T>& nodes) {
  const std::size_t n = nodes.n_nodes();
  const std::size_t D = nodes.dim;
  FeatureMap<T> out(D, nodes.grid_h, nodes.grid_w);
  if (nodes.grid_h * nodes.grid_w != n) throw ShapeError("node grid does not match node count");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < D; ++d) out.data()[d * n + i] = nodes.features[i * D + d];
  }
  return out;
}

/// For every centre, ranks all other nodes by cosine distance (ties to the
/// lower index) and keeps ranks 1, 1+d, ..., 1+(k-1)d.
template <typename T>
Hypergraph dilated_knn(const NodeMatrix<T>& nodes, std::size_t k, std::size_t dilation) {
  const std::size_t n = nodes.n_nodes();
  if (k == 0 || dilation == 0) throw DomainError("dilated_knn needs k >= 1 and d >= 1");
  if (k * dilation >= n) {
    throw DomainError("dilated_knn needs k*d < n_nodes (k=" + std::to_string(k) + ", d=" +
                      std::to_string(dilation) + ", n=" + std::to_string(n) + ")");
  }
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = std::sqrt(detail::squared_norm(nodes.node(i)));

  Hypergraph g{nodes.grid_h, nodes.grid_w, k, dilation, std::vector<Hyperedge>(n)};
  const std::size_t span_needed = (k - 1) * dilation + 1;
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    const auto xi = nodes.node(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double sim = detail::cosine_from_parts(detail::dot(xi, nodes.node(j)), norms[i], norms[j]);
      cand.emplace_back(1.0 - sim, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(span_needed), cand.end());
    auto& edge = g.edges[i];
    edge.center = i;
    edge.neighbors.reserve(k);
    for (std::size_t r = 0; r < k; ++r) edge.neighbors.push_back(cand[r * dilation].second);
  });
  return g;
}

/// h_e = x + sum_j sigmoid(alpha * cos(x, x_j) + beta) * x_j
template <typename T>
EdgeFeatures<T> hyperedge_aggregate(const NodeMatrix<T>& nodes, const Hypergraph& graph,
                                    const StrParams<T>& params) {
  const std::size_t n = nodes.n_nodes();
  const std::size_t D = nodes.dim;
  graph.validate(n);
  EdgeFeatures<T> out{D, graph.k, std::vector<T>(graph.edges.size() * D),
                      std::vector<T>(graph.edges.size() * graph.k),
                      std::vector<T>(graph.edges.size() * graph.k)};
  parallel_for(graph.edges.size(), [&](std::size_t e) {
    const auto& edge = graph.edges[e];
    const auto x = nodes.node(edge.center);
    T* h = out.h.data() + e * D;
    std::copy(x.begin(), x.end(), h);
    for (std::size_t s = 0; s < edge.neighbors.size(); ++s) {
      const auto xj = nodes.node(edge.neighbors[s]);
      const T c = static_cast<T>(cosine_similarity(x, xj));
      const T gate = sigmoid(params.alpha * c + params.beta);
      out.similarity[e * graph.k + s] = c;
      out.gates[e * graph.k + s] = gate;
      for (std::size_t d = 0; d < D; ++d) h[d] += gate * xj[d];
    }
  });
  return out;
}

/// Message m = (1 + eps) x + sum of h_e over hyperedges containing x,
/// written n_nodes x dim.
template <typename T>
std::vector<T> gather_messages(const NodeMatrix<T>& nodes, const EdgeFeatures<T>& edges,
                               const Hypergraph& graph, T epsilon) {
  const std::size_t n = nodes.n_nodes();
  const std::size_t D = nodes.dim;
  const auto members = graph.membership();
  std::vector<T> m(n * D);
  parallel_for(n, [&](std::size_t i) {
    if (members[i].empty()) throw DomainError("node " + std::to_string(i) + " is in no hyperedge");
    const auto x = nodes.node(i);
    T* dst = m.data() + i * D;
    for (std::size_t d = 0; d < D; ++d) dst[d] = (T{1} + epsilon) * x[d];
    for (std::size_t e : members[i]) {
      const auto h = edges.edge(e);
      for (std::size_t d = 0; d < D; ++d) dst[d] += h[d];
    }
  });
  return m;
}

namespace detail {

// y_i = sigmoid(W m_i + b) for every node; W is the 1x1 update kernel.
template <typename T>
std::vector<T> apply_update(const std::vector<T>& m, std::size_t n, const ConvKernel<T>& update) {
  const std::size_t D = update.in_channels;
  const std::size_t O = update.out_channels;
  std::vector<T> y(n * O);
  parallel_for(n, [&](std::size_t i) {
    const T* mi = m.data() + i * D;
    for (std::size_t o = 0; o < O; ++o) {
      T acc = update.bias[o];
      const T* w = update.weights.data() + o * D;
      for (std::size_t d = 0; d < D; ++d) acc += w[d] * mi[d];
      y[i * O + o] = sigmoid(acc);
    }
  });
  return y;
}

template <typename T>
void check_update_kernel(const ConvKernel<T>& update, std::size_t dim) {
  update.validate();
  if (update.kernel_h != 1 || update.kernel_w != 1 || update.groups != 1 ||
      update.in_channels != dim || update.out_channels != dim) {
    throw ShapeError("update kernel must be 1x1 " + std::to_string(dim) + "->" + std::to_string(dim));
  }
}

}  // namespace detail

template <typename T>
NodeMatrix<T> node_update(const NodeMatrix<T>& nodes, const EdgeFeatures<T>& edges,
                          const Hypergraph& graph, const StrParams<T>& params) {
  detail::check_update_kernel(params.update, nodes.dim);
  const auto m = gather_messages(nodes, edges, graph, params.epsilon);
  NodeMatrix<T> out{nodes.grid_h, nodes.grid_w, nodes.dim, {}, nodes.coords};
  out.features = detail::apply_update(m, nodes.n_nodes(), params.update);
  return out;
}

/// Everything str_backward needs, plus the forward outputs themselves.
template <typename T>
struct StrForward {
  FeatureMap<T> input;
  FeatureMap<T> normalized;
  std::vector<T> inv_std;
  NodeMatrix<T> nodes;
  Hypergraph graph;
  EdgeFeatures<T> edges;
  std::vector<T> messages;
  FeatureMap<T> f_str;

  bool has_cache() const { return !f_str.empty() && !input.empty(); }
};

template <typename T>
void check_str_params(const StrParams<T>& params, const Shape3& in) {
  params.refine.validate();
  if (params.refine.in_channels != in.channels || params.refine.out_channels != in.channels ||
      params.refine.kernel_h != 3 || params.refine.kernel_w != 3) {
    throw ShapeError("refine kernel must be 3x3 " + std::to_string(in.channels) + "->" +
                     std::to_string(in.channels));
  }
  detail::check_update_kernel(params.update, in.channels);
  if (params.k * params.dilation >= in.height * in.width) {
    throw DomainError("k*d must be below the node count " + std::to_string(in.height * in.width));
  }
}

template <typename T>
StrForward<T> str_forward(const FeatureMap<T>& f_concat, const StrParams<T>& params) {
  check_str_params(params, f_concat.shape());
  StrForward<T> fwd;
  fwd.input = f_concat;
  auto norm = instance_normalize(conv2d(f_concat, params.refine, 1));
  fwd.inv_std = std::move(norm.inv_std);
  fwd.normalized = std::move(norm.normalized);
  FeatureMap<T> refined = fwd.normalized;
  for (std::size_t c = 0; c < refined.channels(); ++c) {
    for (T& x : refined.channel(c)) x = params.norm_scale.at(c) * x + params.norm_shift.at(c);
  }
  fwd.nodes = to_nodes(refined);
  fwd.graph = dilated_knn(fwd.nodes, params.k, params.dilation);
  fwd.edges = hyperedge_aggregate(fwd.nodes, fwd.graph, params);
  fwd.messages = gather_messages(fwd.nodes, fwd.edges, fwd.graph, params.epsilon);
  NodeMatrix<T> updated{fwd.nodes.grid_h, fwd.nodes.grid_w, fwd.nodes.dim, {}, fwd.nodes.coords};
  updated.features = detail::apply_update(fwd.messages, fwd.nodes.n_nodes(), params.update);
  fwd.f_str = from_nodes(updated);
  return fwd;
}

template <typename T>
struct StrGradients {
  FeatureMap<T> f_concat;
  T alpha{0};
  T beta{0};
  T epsilon{0};
  ConvKernel<T> refine;
  ConvKernel<T> update;
  std::vector<T> norm_scale;
  std::vector<T> norm_shift;
};

/// Reverse-mode derivative of str_forward with the hypergraph held fixed.
template <typename T>
StrGradients<T> str_backward(const StrForward<T>& fwd, const StrParams<T>& params,
                             const FeatureMap<T>& grad_f_str) {
  if (!fwd.has_cache()) throw StateError("str_backward called without forward cache");
  check_same_shape(grad_f_str, fwd.f_str, "str_backward upstream gradient");
  const std::size_t n = fwd.nodes.n_nodes();
  const std::size_t D = fwd.nodes.dim;
  const auto& graph = fwd.graph;
  const auto& W = params.update;

  StrGradients<T> g;
  g.update = ConvKernel<T>::zeros(D, D, 1, 1);

  // Through y = sigmoid(W m + b).
  std::vector<T> grad_m(n * D, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    const T* mi = fwd.messages.data() + i * D;
    for (std::size_t o = 0; o < D; ++o) {
      const T y = fwd.f_str.data()[o * n + i];
      const T gz = grad_f_str.data()[o * n + i] * sigmoid_derivative(y);
      if (gz == T{0}) continue;
      g.update.bias[o] += gz;
      T* gw = g.update.weights.data() + o * D;
      const T* w = W.weights.data() + o * D;
      for (std::size_t d = 0; d < D; ++d) {
        gw[d] += gz * mi[d];
        grad_m[i * D + d] += gz * w[d];
      }
    }
  }

  // Through m = (1 + eps) x + sum_e h_e.
  std::vector<T> grad_x(n * D, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = fwd.nodes.node(i);
    for (std::size_t d = 0; d < D; ++d) {
      g.epsilon += grad_m[i * D + d] * x[d];
      grad_x[i * D + d] += (T{1} + params.epsilon) * grad_m[i * D + d];
    }
  }

  // Through h_e = x_c + sum_s gate_s x_s, gate_s = sigmoid(alpha c_s + beta).
  std::vector<T> grad_h(D);
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    const std::size_t ci = edge.center;
    for (std::size_t d = 0; d < D; ++d) grad_h[d] = grad_m[ci * D + d];
    for (std::size_t j : edge.neighbors) {
      for (std::size_t d = 0; d < D; ++d) grad_h[d] += grad_m[j * D + d];
    }
    for (std::size_t d = 0; d < D; ++d) grad_x[ci * D + d] += grad_h[d];

    const auto xc = fwd.nodes.node(ci);
    const T norm_c = static_cast<T>(std::sqrt(detail::squared_norm(xc)));
    for (std::size_t s = 0; s < edge.neighbors.size(); ++s) {
      const std::size_t j = edge.neighbors[s];
      const auto xj = fwd.nodes.node(j);
      const T gate = fwd.edges.gates[e * graph.k + s];
      const T c = fwd.edges.similarity[e * graph.k + s];
      T grad_gate{0};
      for (std::size_t d = 0; d < D; ++d) {
        grad_x[j * D + d] += gate * grad_h[d];
        grad_gate += grad_h[d] * xj[d];
      }
      const T grad_pre = grad_gate * sigmoid_derivative(gate);
      g.alpha += grad_pre * c;
      g.beta += grad_pre;
      const T grad_c = grad_pre * params.alpha;
      const T norm_j = static_cast<T>(std::sqrt(detail::squared_norm(xj)));
      if (grad_c == T{0} || norm_c == T{0} || norm_j == T{0}) continue;
      // dc/dxc = xj/(|xc||xj|) - c xc/|xc|^2, symmetric for xj.
      const T inv_prod = T{1} / (norm_c * norm_j);
      const T inv_cc = T{1} / (norm_c * norm_c);
      const T inv_jj = T{1} / (norm_j * norm_j);
      for (std::size_t d = 0; d < D; ++d) {
        grad_x[ci * D + d] += grad_c * (xj[d] * inv_prod - c * xc[d] * inv_cc);
        grad_x[j * D + d] += grad_c * (xc[d] * inv_prod - c * xj[d] * inv_jj);
      }
    }
  }

  // Position encoding is additive and constant; scatter back to C x H x W.
  const std::size_t C = D;
  g.norm_scale.assign(C, T{0});
  g.norm_shift.assign(C, T{0});
  FeatureMap<T> grad_conv(C, fwd.input.height(), fwd.input.width());
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t c = 0; c < C; ++c) {
    auto xhat = fwd.normalized.channel(c);
    T sum_g{0};
    T sum_gx{0};
    std::vector<T> grad_xhat(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T gr = grad_x[i * D + c];
      g.norm_scale[c] += gr * xhat[i];
      g.norm_shift[c] += gr;
      grad_xhat[i] = gr * params.norm_scale[c];
      sum_g += grad_xhat[i];
      sum_gx += grad_xhat[i] * xhat[i];
    }
    auto dst = grad_conv.channel(c);
    const T inv = fwd.inv_std[c];
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = inv * (grad_xhat[i] - inv_n * sum_g - inv_n * xhat[i] * sum_gx);
    }
  }
  auto conv_g = conv2d_backward(fwd.input, params.refine, 1, 1, grad_conv);
  g.f_concat = std::move(conv_g.input);
  g.refine = std::move(conv_g.kernel);
  // Instance norm removes any per-channel constant, so the refine bias has no
  // effect on the output. The accumulated sum above is zero up to rounding.
  std::fill(g.refine.bias.begin(), g.refine.bias.end(), T{0});
  return g;
}

/// Convenience overload: recomputes the forward pass, then differentiates.
template <typename T>
StrGradients<T> str_backward(const FeatureMap<T>& f_concat, const StrParams<T>& params,
                             const FeatureMap<T>& grad_f_str) {
  return str_backward(str_forward(f_concat, params), params, grad_f_str);
}

}  // namespace dtea
