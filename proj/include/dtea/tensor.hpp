// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense C x H x W feature maps, convolution kernels and the handful of
// spatial operators the skip-connection pipeline is built from. Every
// operator that participates in training also has an adjoint here.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dtea/error.hpp"
#include "dtea/parallel.hpp"

namespace dtea {

struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;

  std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
};

/// Channel-major, row-major rank-3 array. T is float on the standard path
/// and double in verification mode.
template <typename T>
class FeatureMap {
 public:
  using value_type = T;

  FeatureMap() = default;

  FeatureMap(std::size_t channels, std::size_t height, std::size_t width, T fill = T{0})
      : shape_{channels, height, width}, data_(channels * height * width, fill) {}

  explicit FeatureMap(Shape3 shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}

  FeatureMap(Shape3 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("feature map " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                       " values, got " + std::to_string(data_.size()));
    }
  }

  const Shape3& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t plane() const { return shape_.height * shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::span<T> channel(std::size_t c) { return std::span<T>(data_).subspan(c * plane(), plane()); }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(data_).subspan(c * plane(), plane());
  }

  template <typename U>
  FeatureMap<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return FeatureMap<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  Shape3 shape_{};
  std::vector<T> data_;
};

/// Convolution weights laid out [out][in / groups][kh][kw].
template <typename T>
struct ConvKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t groups = 1;
  std::vector<T> weights;
  std::vector<T> bias;

  static ConvKernel zeros(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw,
                          std::size_t groups = 1) {
    ConvKernel k{out, in, kh, kw, groups, {}, {}};
    k.validate_geometry();
    k.weights.assign(out * (in / groups) * kh * kw, T{0});
    k.bias.assign(out, T{0});
    return k;
  }

  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t fan_in() const { return in_per_group() * kernel_h * kernel_w; }
  std::size_t weight_count() const { return out_channels * fan_in(); }

  T& weight(std::size_t o, std::size_t i_local, std::size_t ky, std::size_t kx) {
    return weights[((o * in_per_group() + i_local) * kernel_h + ky) * kernel_w + kx];
  }
  const T& weight(std::size_t o, std::size_t i_local, std::size_t ky, std::size_t kx) const {
    return weights[((o * in_per_group() + i_local) * kernel_h + ky) * kernel_w + kx];
  }

  void validate_geometry() const {
    if (groups == 0 || out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0) {
      throw ShapeError("conv kernel dimensions must be positive");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
      throw ShapeError("conv kernel channels " + std::to_string(in_channels) + "->" +
                       std::to_string(out_channels) + " not divisible by groups " +
                       std::to_string(groups));
    }
  }

  void validate() const {
    validate_geometry();
    if (weights.size() != weight_count()) {
      throw ShapeError("conv kernel expects " + std::to_string(weight_count()) + " weights, has " +
                       std::to_string(weights.size()));
    }
    if (bias.size() != out_channels) throw ShapeError("conv kernel bias length != out_channels");
  }

  template <typename U>
  ConvKernel<U> cast() const {
    return ConvKernel<U>{out_channels, in_channels, kernel_h, kernel_w, groups,
                         std::vector<U>(weights.begin(), weights.end()),
                         std::vector<U>(bias.begin(), bias.end())};
  }

  friend bool operator==(const ConvKernel&, const ConvKernel&) = default;
};

/// splitmix64. Same seed, same stream, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

inline constexpr double kSigmoidClamp = 1e-7;

/// Logistic sigmoid clamped to [1e-7, 1 - 1e-7].
template <typename T>
T sigmoid(T x) {
  T s;
  if (x >= T{0}) {
    s = T{1} / (T{1} + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T{1} + e);
  }
  const T lo = static_cast<T>(kSigmoidClamp);
  const T hi = T{1} - static_cast<T>(kSigmoidClamp);
  return std::clamp(s, lo, hi);
}

/// d sigmoid / dx expressed through the (clamped) output. Zero where the
/// clamp is active.
template <typename T>
T sigmoid_derivative(T s) {
  const T lo = static_cast<T>(kSigmoidClamp);
  const T hi = T{1} - static_cast<T>(kSigmoidClamp);
  if (s <= lo || s >= hi) return T{0};
  return s * (T{1} - s);
}

template <typename T>
FeatureMap<T> sigmoid(const FeatureMap<T>& input) {
  FeatureMap<T> out(input.channels(), input.height(), input.width());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  return out;
}

inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t padding,
                                      std::size_t stride) {
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

inline void check_conv(const Shape3& in, std::size_t in_channels, std::size_t kh, std::size_t kw,
                       std::size_t padding, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv2d stride must be >= 1");
  if (in.channels != in_channels) {
    throw ShapeError("conv2d input has " + std::to_string(in.channels) +
                     " channels, kernel expects " + std::to_string(in_channels));
  }
  if (in.height + 2 * padding < kh || in.width + 2 * padding < kw) {
    throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + in.str());
  }
}

// Output columns ox for which ix = ox*stride - padding + kx lies in [0, width).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent,
                                                       std::size_t k, std::size_t padding,
                                                       std::size_t stride) {
  const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = 0;
  if (offset < 0) lo = (-offset + s - 1) / s;
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(out_extent);
  // need ox*s + offset <= in_extent - 1
  const std::ptrdiff_t limit = static_cast<std::ptrdiff_t>(in_extent) - 1 - offset;
  if (limit < 0) return {0, 0};
  hi = std::min(hi, limit / s + 1);
  if (hi < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace detail

/// 2-D cross-correlation with zero padding. Each output element accumulates
/// bias first, then input channels, kernel rows and kernel columns in
/// ascending order.
template <typename T>
FeatureMap<T> conv2d(const FeatureMap<T>& input, const ConvKernel<T>& kernel, std::size_t padding,
                     std::size_t stride = 1) {
  kernel.validate();
  detail::check_conv(input.shape(), kernel.in_channels, kernel.kernel_h, kernel.kernel_w, padding,
                     stride);
  const std::size_t H = input.height();
  const std::size_t W = input.width();
  const std::size_t OH = conv_output_extent(H, kernel.kernel_h, padding, stride);
  const std::size_t OW = conv_output_extent(W, kernel.kernel_w, padding, stride);
  FeatureMap<T> out(kernel.out_channels, OH, OW);
  const std::size_t in_pg = kernel.in_per_group();
  const std::size_t out_pg = kernel.out_per_group();

  parallel_for(kernel.out_channels, [&](std::size_t o) {
    auto dst = out.channel(o);
    std::fill(dst.begin(), dst.end(), kernel.bias[o]);
    const std::size_t group = o / out_pg;
    for (std::size_t il = 0; il < in_pg; ++il) {
      auto src = input.channel(group * in_pg + il);
      for (std::size_t ky = 0; ky < kernel.kernel_h; ++ky) {
        const auto [oy_lo, oy_hi] = detail::valid_range(OH, H, ky, padding, stride);
        for (std::size_t kx = 0; kx < kernel.kernel_w; ++kx) {
          const T w = kernel.weight(o, il, ky, kx);
          const auto [ox_lo, ox_hi] = detail::valid_range(OW, W, kx, padding, stride);
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const std::size_t iy = oy * stride + ky - padding;
            T* drow = dst.data() + oy * OW;
            const T* srow = src.data() + iy * W;
            if (stride == 1) {
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) drow[ox] += w * srow[ox + kx - padding];
            } else {
              for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                drow[ox] += w * srow[ox * stride + kx - padding];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
struct ConvGradients {
  FeatureMap<T> input;
  ConvKernel<T> kernel;  // same geometry as the forward kernel, holds dL/dw and dL/db
};

/// Adjoint of conv2d with respect to its input, weights and bias.
template <typename T>
ConvGradients<T> conv2d_backward(const FeatureMap<T>& input, const ConvKernel<T>& kernel,
                                 std::size_t padding, std::size_t stride,
                                 const FeatureMap<T>& grad_out) {
  kernel.validate();
  detail::check_conv(input.shape(), kernel.in_channels, kernel.kernel_h, kernel.kernel_w, padding,
                     stride);
  const std::size_t H = input.height();
  const std::size_t W = input.width();
  const std::size_t OH = conv_output_extent(H, kernel.kernel_h, padding, stride);
  const std::size_t OW = conv_output_extent(W, kernel.kernel_w, padding, stride);
  if (grad_out.shape() != Shape3{kernel.out_channels, OH, OW}) {
    throw ShapeError("conv2d_backward upstream gradient shape " + grad_out.shape().str() +
                     " does not match output " + Shape3{kernel.out_channels, OH, OW}.str());
  }
  const std::size_t in_pg = kernel.in_per_group();
  const std::size_t out_pg = kernel.out_per_group();

  ConvGradients<T> g{FeatureMap<T>(input.channels(), H, W),
                     ConvKernel<T>::zeros(kernel.out_channels, kernel.in_channels, kernel.kernel_h,
                                          kernel.kernel_w, kernel.groups)};

  parallel_for(kernel.out_channels, [&](std::size_t o) {
    auto go = grad_out.channel(o);
    T bias_acc{0};
    for (T v : go) bias_acc += v;
    g.kernel.bias[o] = bias_acc;
    const std::size_t group = o / out_pg;
    for (std::size_t il = 0; il < in_pg; ++il) {
      auto src = input.channel(group * in_pg + il);
      for (std::size_t ky = 0; ky < kernel.kernel_h; ++ky) {
        const auto [oy_lo, oy_hi] = detail::valid_range(OH, H, ky, padding, stride);
        for (std::size_t kx = 0; kx < kernel.kernel_w; ++kx) {
          const auto [ox_lo, ox_hi] = detail::valid_range(OW, W, kx, padding, stride);
          T acc{0};
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const std::size_t iy = oy * stride + ky - padding;
            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
              acc += go[oy * OW + ox] * src[iy * W + ox * stride + kx - padding];
            }
          }
          g.kernel.weight(o, il, ky, kx) = acc;
        }
      }
    }
  });

  parallel_for(input.channels(), [&](std::size_t ic) {
    auto gi = g.input.channel(ic);
    const std::size_t group = ic / in_pg;
    const std::size_t il = ic % in_pg;
    for (std::size_t ol = 0; ol < out_pg; ++ol) {
      const std::size_t o = group * out_pg + ol;
      auto go = grad_out.channel(o);
      for (std::size_t ky = 0; ky < kernel.kernel_h; ++ky) {
        const auto [oy_lo, oy_hi] = detail::valid_range(OH, H, ky, padding, stride);
        for (std::size_t kx = 0; kx < kernel.kernel_w; ++kx) {
          const T w = kernel.weight(o, il, ky, kx);
          const auto [ox_lo, ox_hi] = detail::valid_range(OW, W, kx, padding, stride);
          for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
            const std::size_t iy = oy * stride + ky - padding;
            for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
              gi[iy * W + ox * stride + kx - padding] += w * go[oy * OW + ox];
            }
          }
        }
      }
    }
  });
  return g;
}

namespace detail {

struct BilinearTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

// Half-pixel centres: src = (dst + 0.5) * in/out - 0.5, clamped to [0, in-1].
inline std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<BilinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    taps[d].lo = lo;
    taps[d].hi = std::min(lo + 1, in - 1);
    taps[d].frac = s - static_cast<double>(lo);
  }
  return taps;
}

}  // namespace detail

template <typename T>
FeatureMap<T> resize_bilinear(const FeatureMap<T>& input, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw ShapeError("resize_bilinear target must be >= 1x1");
  if (input.empty()) throw ShapeError("resize_bilinear on empty map");
  if (target_h == input.height() && target_w == input.width()) return input;
  const auto ty = detail::bilinear_taps(input.height(), target_h);
  const auto tx = detail::bilinear_taps(input.width(), target_w);
  const std::size_t W = input.width();
  FeatureMap<T> out(input.channels(), target_h, target_w);
  parallel_for(input.channels(), [&](std::size_t c) {
    auto src = input.channel(c);
    auto dst = out.channel(c);
    for (std::size_t y = 0; y < target_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      const T* r0 = src.data() + ty[y].lo * W;
      const T* r1 = src.data() + ty[y].hi * W;
      for (std::size_t x = 0; x < target_w; ++x) {
        const T fx = static_cast<T>(tx[x].frac);
        const T top = (T{1} - fx) * r0[tx[x].lo] + fx * r0[tx[x].hi];
        const T bottom = (T{1} - fx) * r1[tx[x].lo] + fx * r1[tx[x].hi];
        dst[y * target_w + x] = (T{1} - fy) * top + fy * bottom;
      }
    }
  });
  return out;
}

/// Adjoint of resize_bilinear: scatters output gradients back to the
/// source grid of size src_h x src_w.
template <typename T>
FeatureMap<T> resize_bilinear_backward(const FeatureMap<T>& grad_out, std::size_t src_h,
                                       std::size_t src_w) {
  if (grad_out.height() == src_h && grad_out.width() == src_w) return grad_out;
  const auto ty = detail::bilinear_taps(src_h, grad_out.height());
  const auto tx = detail::bilinear_taps(src_w, grad_out.width());
  const std::size_t OW = grad_out.width();
  FeatureMap<T> g(grad_out.channels(), src_h, src_w);
  parallel_for(grad_out.channels(), [&](std::size_t c) {
    auto go = grad_out.channel(c);
    auto gi = g.channel(c);
    for (std::size_t y = 0; y < grad_out.height(); ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      T* r0 = gi.data() + ty[y].lo * src_w;
      T* r1 = gi.data() + ty[y].hi * src_w;
      for (std::size_t x = 0; x < OW; ++x) {
        const T fx = static_cast<T>(tx[x].frac);
        const T v = go[y * OW + x];
        const T top = (T{1} - fy) * v;
        const T bottom = fy * v;
        r0[tx[x].lo] += (T{1} - fx) * top;
        r0[tx[x].hi] += fx * top;
        r1[tx[x].lo] += (T{1} - fx) * bottom;
        r1[tx[x].hi] += fx * bottom;
      }
    }
  });
  return g;
}

template <typename T>
FeatureMap<T> concat_channels(std::span<const FeatureMap<T>> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels needs at least one input");
  const std::size_t H = inputs.front().height();
  const std::size_t W = inputs.front().width();
  std::size_t channels = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].height() != H || inputs[i].width() != W) {
      throw ShapeError("concat_channels input " + std::to_string(i) + " is " +
                       inputs[i].shape().str() + ", expected spatial " + std::to_string(H) + "x" +
                       std::to_string(W));
    }
    channels += inputs[i].channels();
  }
  std::vector<T> data;
  data.reserve(channels * H * W);
  for (const auto& m : inputs) data.insert(data.end(), m.data().begin(), m.data().end());
  return FeatureMap<T>(Shape3{channels, H, W}, std::move(data));
}

template <typename T>
std::vector<FeatureMap<T>> split_channels(const FeatureMap<T>& input,
                                          std::span<const std::size_t> group_sizes) {
  const std::size_t total = std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
  if (total != input.channels()) {
    throw ShapeError("split_channels groups sum to " + std::to_string(total) + ", input has " +
                     std::to_string(input.channels()) + " channels");
  }
  std::vector<FeatureMap<T>> out;
  out.reserve(group_sizes.size());
  std::size_t offset = 0;
  for (std::size_t n : group_sizes) {
    auto first = input.data().begin() + static_cast<std::ptrdiff_t>(offset * input.plane());
    auto last = first + static_cast<std::ptrdiff_t>(n * input.plane());
    out.emplace_back(Shape3{n, input.height(), input.width()}, std::vector<T>(first, last));
    offset += n;
  }
  return out;
}

/// Fan-in scaled uniform initialisation: weights ~ U[-b, b] with
/// b = sqrt(6 / fan_in), bias zero. Draws happen in double so float and
/// double kernels built from one seed agree to rounding.
template <typename T>
ConvKernel<T> seeded_init(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw,
                          Rng& rng, std::size_t groups = 1) {
  auto k = ConvKernel<T>::zeros(out, in, kh, kw, groups);
  const double bound = std::sqrt(6.0 / static_cast<double>(k.fan_in()));
  for (auto& w : k.weights) w = static_cast<T>(rng.uniform(-bound, bound));
  return k;
}

template <typename T>
void check_same_shape(const FeatureMap<T>& a, const FeatureMap<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename T>
void add_inplace(FeatureMap<T>& dst, const FeatureMap<T>& src) {
  check_same_shape(dst, src, "add");
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
void add_inplace(ConvKernel<T>& dst, const ConvKernel<T>& src) {
  if (dst.weights.size() != src.weights.size() || dst.bias.size() != src.bias.size()) {
    throw ShapeError("kernel accumulate: geometry mismatch");
  }
  for (std::size_t i = 0; i < dst.weights.size(); ++i) dst.weights[i] += src.weights[i];
  for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
}

}  // namespace dtea
