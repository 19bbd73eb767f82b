// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON documents written next to a run: the hypergraph, the entropy report
// and the run manifest. Every document carries "schema_version": 1.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtea/config.hpp"
#include "dtea/epg.hpp"
#include "dtea/error.hpp"
#include "dtea/pipeline.hpp"
#include "dtea/str.hpp"

namespace dtea {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

using json = nlohmann::json;

template <typename T>
json hypergraph_json(const Hypergraph& graph, std::span<const T> gates) {
  if (gates.size() != graph.edges.size() * graph.k) {
    throw ShapeError("hypergraph export: expected one gate per neighbor");
  }
  json edges = json::array();
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    std::vector<double> g;
    for (std::size_t s = 0; s < graph.k; ++s) g.push_back(static_cast<double>(gates[e * graph.k + s]));
    edges.push_back({{"center", edge.center}, {"neighbors", edge.neighbors}, {"gates", g}});
  }
  return {{"schema_version", kSchemaVersion},
          {"grid", {{"h", graph.grid_h}, {"w", graph.grid_w}}},
          {"k", graph.k},
          {"d", graph.dilation},
          {"hyperedges", std::move(edges)}};
}

inline json entropy_json(const EntropyReport& r) {
  return {{"schema_version", kSchemaVersion},
          {"channels", r.scores.size()},
          {"mu", r.mu},
          {"K", r.K},
          {"entropy_sign", std::string(to_string(r.sign))},
          {"scores", r.scores},
          {"scores_conventional", r.conventional_scores()},
          {"selected", r.selected}};
}

namespace detail {

inline const json& require(const json& j, const char* key, const char* doc) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string(doc) + ": missing field '" + key + "'");
  }
  return j.at(key);
}

inline std::size_t require_count(const json& j, const char* key, const char* doc) {
  const json& v = require(j, key, doc);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw FormatError(std::string(doc) + ": field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline void require_schema(const json& j, const char* doc) {
  if (require(j, "schema_version", doc) != kSchemaVersion) {
    throw FormatError(std::string(doc) + ": unsupported schema_version");
  }
}

}  // namespace detail

/// Checks a hypergraph document: counts, index ranges, distinct members and
/// gates strictly inside (0, 1).
inline void validate_hypergraph_json(const json& j) {
  constexpr const char* doc = "hypergraph";
  detail::require_schema(j, doc);
  const json& grid = detail::require(j, "grid", doc);
  const std::size_t h = detail::require_count(grid, "h", doc);
  const std::size_t w = detail::require_count(grid, "w", doc);
  const std::size_t k = detail::require_count(j, "k", doc);
  detail::require_count(j, "d", doc);
  const json& edges = detail::require(j, "hyperedges", doc);
  if (!edges.is_array() || edges.size() != h * w) {
    throw FormatError("hypergraph: expected one hyperedge per grid node");
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const json& edge = edges[e];
    if (detail::require_count(edge, "center", doc) != e) throw FormatError("hypergraph: hyperedge centers out of order");
    const json& nb = detail::require(edge, "neighbors", doc);
    const json& gates = detail::require(edge, "gates", doc);
    if (!nb.is_array() || nb.size() != k || !gates.is_array() || gates.size() != k) {
      throw FormatError("hypergraph: hyperedge " + std::to_string(e) + " must list k neighbors and k gates");
    }
    std::vector<std::size_t> members{e};
    for (const auto& n : nb) {
      if (!n.is_number_integer() || n.get<long long>() < 0 || n.get<std::size_t>() >= h * w) {
        throw FormatError("hypergraph: neighbor index out of range in hyperedge " + std::to_string(e));
      }
      members.push_back(n.get<std::size_t>());
    }
    std::sort(members.begin(), members.end());
    if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
      throw FormatError("hypergraph: hyperedge " + std::to_string(e) + " repeats a node");
    }
    for (const auto& g : gates) {
      if (!g.is_number() || !(g.get<double>() > 0.0 && g.get<double>() < 1.0)) {
        throw FormatError("hypergraph: gate outside (0, 1) in hyperedge " + std::to_string(e));
      }
    }
  }
}

inline void validate_entropy_json(const json& j) {
  constexpr const char* doc = "entropy report";
  detail::require_schema(j, doc);
  const std::size_t C = detail::require_count(j, "channels", doc);
  const std::size_t K = detail::require_count(j, "K", doc);
  if (!detail::require(j, "mu", doc).is_number()) throw FormatError("entropy report: mu must be a number");
  parse_entropy_sign(detail::require(j, "entropy_sign", doc).get<std::string>());
  const json& scores = detail::require(j, "scores", doc);
  const json& conv = detail::require(j, "scores_conventional", doc);
  const json& sel = detail::require(j, "selected", doc);
  if (!scores.is_array() || scores.size() != C || !conv.is_array() || conv.size() != C) {
    throw FormatError("entropy report: expected one score per channel");
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (!scores[c].is_number() || !conv[c].is_number()) throw FormatError("entropy report: non-numeric score");
  }
  if (!sel.is_array() || sel.size() != K || K == 0 || K > C) {
    throw FormatError("entropy report: expected K selected channels");
  }
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (!sel[i].is_number_integer() || sel[i].get<long long>() < 0 || sel[i].get<std::size_t>() >= C) {
      throw FormatError("entropy report: selected index out of range");
    }
    if (i > 0 && sel[i].get<std::size_t>() <= sel[i - 1].get<std::size_t>()) {
      throw FormatError("entropy report: selected indices must be strictly ascending");
    }
  }
}

inline json config_json(const PipelineConfig& c) {
  return {{"H", c.H},
          {"W", c.W},
          {"C1", c.stage_channels[0]},
          {"C2", c.stage_channels[1]},
          {"C3", c.stage_channels[2]},
          {"C4", c.stage_channels[3]},
          {"Cs", c.Cs},
          {"k", c.k},
          {"dilation", c.dilation},
          {"epsilon", c.epsilon},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"mu", c.mu},
          {"K", c.K},
          {"entropy_sign", std::string(to_string(c.entropy_sign))},
          {"seed", c.seed},
          {"precision", std::string(to_string(c.precision))}};
}

inline PipelineConfig config_from_json(const json& j) {
  try {
    PipelineConfig c;
    c.H = j.at("H").get<std::size_t>();
    c.W = j.at("W").get<std::size_t>();
    c.stage_channels = {j.at("C1").get<std::size_t>(), j.at("C2").get<std::size_t>(),
                        j.at("C3").get<std::size_t>(), j.at("C4").get<std::size_t>()};
    c.Cs = j.at("Cs").get<std::size_t>();
    c.k = j.at("k").get<std::size_t>();
    c.dilation = j.at("dilation").get<std::size_t>();
    c.epsilon = j.at("epsilon").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.mu = j.at("mu").get<double>();
    c.K = j.at("K").get<std::size_t>();
    c.entropy_sign = parse_entropy_sign(j.at("entropy_sign").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto prec = j.at("precision").get<std::string>();
    if (prec != "f32" && prec != "f64") throw ConfigError("precision must be f32 or f64");
    c.precision = prec == "f32" ? Precision::f32 : Precision::f64;
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config in manifest: ") + e.what());
  }
}

/// Where a run's stage features came from.
struct InputSource {
  std::optional<std::uint64_t> synthetic_seed;
  std::array<std::string, kStageCount> stage_paths;

  bool synthetic() const { return synthetic_seed.has_value(); }
};

/// Everything needed to replay a run bit-for-bit.
struct RunManifest {
  PipelineConfig config;
  InputSource input;
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;
  StageTimings timings;
  std::size_t parameter_count = 0;
};

inline json manifest_json(const RunManifest& m) {
  json input;
  if (m.input.synthetic()) {
    input = {{"kind", "synthetic"}, {"seed", *m.input.synthetic_seed}};
  } else {
    input = {{"kind", "files"}, {"paths", m.input.stage_paths}};
  }
  return {{"schema_version", kSchemaVersion},
          {"tool", {{"name", "dtea"}, {"version", m.tool_version}}},
          {"config", config_json(m.config)},
          {"derived", {{"C", m.config.fused_channels()},
                       {"H_t", m.config.target_h()},
                       {"W_t", m.config.target_w()},
                       {"n_nodes", m.config.n_nodes()}}},
          {"input", std::move(input)},
          {"outputs", m.outputs},
          {"parameter_count", m.parameter_count},
          {"timings_ms", {{"preproc", m.timings.preproc_ms},
                          {"str", m.timings.str_ms},
                          {"epg", m.timings.epg_ms},
                          {"postproc", m.timings.postproc_ms},
                          {"total", m.timings.total_ms}}}};
}

inline RunManifest manifest_from_json(const json& j) {
  detail::require_schema(j, "manifest");
  RunManifest m;
  m.config = config_from_json(detail::require(j, "config", "manifest"));
  const json& input = detail::require(j, "input", "manifest");
  try {
    const auto kind = input.at("kind").get<std::string>();
    if (kind == "synthetic") {
      m.input.synthetic_seed = input.at("seed").get<std::uint64_t>();
    } else if (kind == "files") {
      m.input.stage_paths = input.at("paths").get<std::array<std::string, kStageCount>>();
    } else {
      throw FormatError("manifest: unknown input kind '" + kind + "'");
    }
    m.tool_version = j.at("tool").at("version").get<std::string>();
    if (j.contains("outputs")) m.outputs = j.at("outputs").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dtea
