// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-scale feature preprocessing: every encoder stage is compressed to Cs
// channels by a 1x1 convolution, resized to the deepest stage's grid and the
// four results are stacked along channels.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dtea/tensor.hpp"

namespace dtea {

inline constexpr std::size_t kStageCount = 4;

template <typename T>
struct StageSpec {
  std::size_t index = 1;  // 1..4
  std::size_t in_channels = 0;
  std::size_t in_height = 0;  // H / 2^(index+1)
  std::size_t in_width = 0;
  ConvKernel<T> compress;  // 1x1, in_channels -> Cs

  Shape3 input_shape() const { return {in_channels, in_height, in_width}; }
};

template <typename T>
struct PreprocParams {
  std::size_t cs = 32;
  std::size_t target_h = 0;  // H / 32
  std::size_t target_w = 0;
  std::array<StageSpec<T>, kStageCount> stages;

  std::size_t fused_channels() const { return kStageCount * cs; }
};

/// Side length of encoder stage `index` (1-based) for an input of `extent`.
inline std::size_t stage_extent(std::size_t extent, std::size_t index) {
  return extent >> (index + 1);
}

template <typename T>
PreprocParams<T> make_preproc_params(std::size_t height, std::size_t width,
                                     const std::array<std::size_t, kStageCount>& stage_channels,
                                     std::size_t cs, Rng& rng) {
  PreprocParams<T> p;
  p.cs = cs;
  p.target_h = height / 32;
  p.target_w = width / 32;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    auto& s = p.stages[i];
    s.index = i + 1;
    s.in_channels = stage_channels[i];
    s.in_height = stage_extent(height, i + 1);
    s.in_width = stage_extent(width, i + 1);
    s.compress = seeded_init<T>(cs, stage_channels[i], 1, 1, rng);
  }
  return p;
}

template <typename T>
void check_stage_input(const FeatureMap<T>& f, const StageSpec<T>& spec) {
  if (f.shape() != spec.input_shape()) {
    throw ShapeError("stage " + std::to_string(spec.index) + " input is " + f.shape().str() +
                     ", expected " + spec.input_shape().str());
  }
}

/// Resize(Conv1x1(f_i)) onto the H_t x W_t grid.
template <typename T>
FeatureMap<T> compress_and_align(const FeatureMap<T>& f, const StageSpec<T>& spec,
                                 const PreprocParams<T>& params) {
  check_stage_input(f, spec);
  return resize_bilinear(conv2d(f, spec.compress, 0), params.target_h, params.target_w);
}

template <typename T>
FeatureMap<T> fuse_scales(std::span<const FeatureMap<T>> aligned, const PreprocParams<T>& params) {
  if (aligned.size() != kStageCount) {
    throw ShapeError("fuse_scales expects 4 stage maps, got " + std::to_string(aligned.size()));
  }
  const Shape3 want{params.cs, params.target_h, params.target_w};
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    if (aligned[i].shape() != want) {
      throw ShapeError("fuse_scales stage " + std::to_string(i + 1) + " is " +
                       aligned[i].shape().str() + ", expected " + want.str());
    }
  }
  return concat_channels(aligned);
}

template <typename T>
struct StageGradients {
  FeatureMap<T> input;
  ConvKernel<T> compress;
};

template <typename T>
StageGradients<T> compress_and_align_backward(const FeatureMap<T>& f, const StageSpec<T>& spec,
                                              const FeatureMap<T>& grad_aligned) {
  check_stage_input(f, spec);
  const auto compressed = conv2d(f, spec.compress, 0);
  const auto grad_compressed =
      resize_bilinear_backward(grad_aligned, compressed.height(), compressed.width());
  auto g = conv2d_backward(f, spec.compress, 0, 1, grad_compressed);
  return {std::move(g.input), std::move(g.kernel)};
}

}  // namespace dtea
