// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline hyperparameters and their flat "key = value" text form.

#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "dtea/epg.hpp"
#include "dtea/error.hpp"
#include "dtea/preproc.hpp"

namespace dtea {

enum class Precision { f32, f64 };

inline std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

struct PipelineConfig {
  std::size_t H = 224;
  std::size_t W = 224;
  std::array<std::size_t, kStageCount> stage_channels{64, 128, 320, 512};
  std::size_t Cs = 32;
  std::size_t k = 8;
  std::size_t dilation = 1;
  double epsilon = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double mu = kDefaultMu;
  std::size_t K = 64;
  EntropySign entropy_sign = EntropySign::literal;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;

  std::size_t target_h() const { return H / 32; }
  std::size_t target_w() const { return W / 32; }
  std::size_t fused_channels() const { return kStageCount * Cs; }
  std::size_t n_nodes() const { return target_h() * target_w(); }

  /// Throws ConfigError naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw ConfigError("invalid config field '" + field + "': " + why);
    };
    if (H == 0 || H % 32 != 0) fail("H", "must be a positive multiple of 32");
    if (W == 0 || W % 32 != 0) fail("W", "must be a positive multiple of 32");
    for (std::size_t i = 0; i < kStageCount; ++i) {
      if (stage_channels[i] == 0) fail("C" + std::to_string(i + 1), "must be >= 1");
    }
    if (Cs == 0) fail("Cs", "must be >= 1");
    if (k == 0) fail("k", "must be >= 1");
    if (dilation == 0) fail("dilation", "must be >= 1");
    if (k * dilation >= n_nodes()) {
      fail("k", "k*dilation = " + std::to_string(k * dilation) + " must be below the " +
                    std::to_string(n_nodes()) + " grid nodes");
    }
    if (K == 0 || K > fused_channels()) {
      fail("K", std::to_string(K) + " must lie in 1..4*Cs = " + std::to_string(fused_channels()));
    }
    if (!(mu > 0.0 && mu <= 4.0)) fail("mu", "must lie in (0, 4]");
    if (!std::isfinite(epsilon)) fail("epsilon", "must be finite");
    if (!std::isfinite(alpha)) fail("alpha", "must be finite");
    if (!std::isfinite(beta)) fail("beta", "must be finite");
  }

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

inline PipelineConfig default_config() { return PipelineConfig{}; }

/// Small 64-bit configuration used by the gradient checks. A 2x2 node grid
/// is the smallest one on which k = 2 neighbours exist.
inline PipelineConfig tiny_config() {
  PipelineConfig c;
  c.H = 64;
  c.W = 64;
  c.stage_channels = {8, 16, 24, 32};
  c.Cs = 4;
  c.k = 2;
  c.dilation = 1;
  c.K = 8;
  c.precision = Precision::f64;
  return c;
}

inline PipelineConfig preset_config(std::string_view name) {
  if (name == "default") return default_config();
  if (name == "tiny") return tiny_config();
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected default or tiny)");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError("config field '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

inline double parse_real(std::string_view key, std::string_view v) {
  // from_chars for double is not available on every standard library we target.
  std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError("config field '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses "key = value" lines; '#' starts a comment. Keys left out keep
/// their defaults. Unknown or repeated keys are errors.
inline PipelineConfig parse_config(std::string_view text) {
  PipelineConfig c;
  std::map<std::string, int> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (seen[key]++ > 0) throw ConfigError("config key '" + key + "' given twice");

    if (key == "H") c.H = detail::parse_uint(key, value);
    else if (key == "W") c.W = detail::parse_uint(key, value);
    else if (key == "C1") c.stage_channels[0] = detail::parse_uint(key, value);
    else if (key == "C2") c.stage_channels[1] = detail::parse_uint(key, value);
    else if (key == "C3") c.stage_channels[2] = detail::parse_uint(key, value);
    else if (key == "C4") c.stage_channels[3] = detail::parse_uint(key, value);
    else if (key == "Cs") c.Cs = detail::parse_uint(key, value);
    else if (key == "k") c.k = detail::parse_uint(key, value);
    else if (key == "dilation") c.dilation = detail::parse_uint(key, value);
    else if (key == "epsilon") c.epsilon = detail::parse_real(key, value);
    else if (key == "alpha") c.alpha = detail::parse_real(key, value);
    else if (key == "beta") c.beta = detail::parse_real(key, value);
    else if (key == "mu") c.mu = detail::parse_real(key, value);
    else if (key == "K") c.K = detail::parse_uint(key, value);
    else if (key == "entropy_sign") c.entropy_sign = parse_entropy_sign(value);
    else if (key == "seed") c.seed = detail::parse_uint(key, value);
    else if (key == "precision") {
      if (value == "f32") c.precision = Precision::f32;
      else if (value == "f64") c.precision = Precision::f64;
      else throw ConfigError("config field 'precision': expected f32 or f64, got '" + std::string(value) + "'");
    } else {
      throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  return c;
}

inline std::string to_config_text(const PipelineConfig& c) {
  std::ostringstream out;
  out << "H = " << c.H << "\n"
      << "W = " << c.W << "\n";
  for (std::size_t i = 0; i < kStageCount; ++i) out << "C" << (i + 1) << " = " << c.stage_channels[i] << "\n";
  out << "Cs = " << c.Cs << "\n"
      << "k = " << c.k << "\n"
      << "dilation = " << c.dilation << "\n"
      << "epsilon = " << detail::format_real(c.epsilon) << "\n"
      << "alpha = " << detail::format_real(c.alpha) << "\n"
      << "beta = " << detail::format_real(c.beta) << "\n"
      << "mu = " << detail::format_real(c.mu) << "\n"
      << "K = " << c.K << "\n"
      << "entropy_sign = " << to_string(c.entropy_sign) << "\n"
      << "seed = " << c.seed << "\n"
      << "precision = " << to_string(c.precision) << "\n";
  return out.str();
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace dtea
