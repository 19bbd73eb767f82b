// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "dtea/preproc.hpp"
#include "dtea/tensor.hpp"

namespace dtea {

template <typename T>
struct PostprocParams {
  std::size_t cs = 32;
  std::array<ConvKernel<T>, kStageCount> restore;  // 3x3, Cs -> C_i, padding 1
  std::array<std::size_t, kStageCount> target_h{};
  std::array<std::size_t, kStageCount> target_w{};
};

template <typename T>
PostprocParams<T> make_postproc_params(std::size_t height, std::size_t width,
                                       const std::array<std::size_t, kStageCount>& stage_channels,
                                       std::size_t cs, Rng& rng) {
  PostprocParams<T> p;
  p.cs = cs;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    p.restore[i] = seeded_init<T>(stage_channels[i], cs, 3, 3, rng);
    p.target_h[i] = stage_extent(height, i + 1);
    p.target_w[i] = stage_extent(width, i + 1);
  }
  return p;
}

namespace detail {

template <typename T>
std::vector<FeatureMap<T>> split_stage_groups(const FeatureMap<T>& f_epg,
                                              const std::array<FeatureMap<T>, kStageCount>& aligned,
                                              std::size_t cs) {
  if (f_epg.channels() != kStageCount * cs) {
    throw ShapeError("redistribute: f_EPG has " + std::to_string(f_epg.channels()) +
                     " channels, expected " + std::to_string(kStageCount * cs));
  }
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (aligned[i].shape() != Shape3{cs, f_epg.height(), f_epg.width()}) {
      throw ShapeError("redistribute: aligned stage " + std::to_string(i + 1) + " is " +
                       aligned[i].shape().str());
    }
  }
  const std::vector<std::size_t> groups(kStageCount, cs);
  return split_channels(f_epg, std::span<const std::size_t>(groups));
}

}  // namespace detail

/// f_i'' = Conv3x3(Resize(f_i' + group_i(f_EPG))) for each stage.
template <typename T>
std::array<FeatureMap<T>, kStageCount> redistribute(const FeatureMap<T>& f_epg,
                                                    const std::array<FeatureMap<T>, kStageCount>& aligned,
                                                    const PostprocParams<T>& params) {
  auto groups = detail::split_stage_groups(f_epg, aligned, params.cs);
  std::array<FeatureMap<T>, kStageCount> out;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    add_inplace(groups[i], aligned[i]);
    out[i] = conv2d(resize_bilinear(groups[i], params.target_h[i], params.target_w[i]),
                    params.restore[i], 1);
  }
  return out;
}

template <typename T>
struct PostprocGradients {
  FeatureMap<T> f_epg;
  std::array<FeatureMap<T>, kStageCount> aligned;
  std::array<ConvKernel<T>, kStageCount> restore;
};

template <typename T>
PostprocGradients<T> redistribute_backward(const FeatureMap<T>& f_epg,
                                           const std::array<FeatureMap<T>, kStageCount>& aligned,
                                           const PostprocParams<T>& params,
                                           const std::array<FeatureMap<T>, kStageCount>& grad_out) {
  auto groups = detail::split_stage_groups(f_epg, aligned, params.cs);
  PostprocGradients<T> g;
  std::vector<FeatureMap<T>> grad_groups;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    add_inplace(groups[i], aligned[i]);
    const auto resized = resize_bilinear(groups[i], params.target_h[i], params.target_w[i]);
    auto conv_g = conv2d_backward(resized, params.restore[i], 1, 1, grad_out[i]);
    g.restore[i] = std::move(conv_g.kernel);
    g.aligned[i] = resize_bilinear_backward(conv_g.input, groups[i].height(), groups[i].width());
    grad_groups.push_back(g.aligned[i]);
  }
  g.f_epg = concat_channels(std::span<const FeatureMap<T>>(grad_groups));
  return g;
}

}  // namespace dtea
