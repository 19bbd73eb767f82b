// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// dtea: run the skip connection on synthetic or stored features, export its
// hypergraph and entropy artifacts, self-check, and benchmark.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtea/config.hpp"
#include "dtea/export.hpp"
#include "dtea/parallel.hpp"
#include "dtea/pipeline.hpp"
#include "dtea/selfcheck.hpp"
#include "dtea/tensor_io.hpp"

namespace fs = std::filesystem;
using dtea::json;

namespace {

enum Exit : int { kOk = 0, kConfigError = 1, kInputError = 2, kNumericError = 3, kSelfcheckFailed = 4 };

// Carries an exit status out of a subcommand.
struct CommandError {
  int code;
  std::string message;
};

constexpr std::array<const char*, dtea::kStageCount> kOutputNames{"stage1.dtea", "stage2.dtea", "stage3.dtea",
                                                                  "stage4.dtea"};
constexpr const char* kHypergraphFile = "hypergraph.json";
constexpr const char* kEntropyFile = "entropy.json";
constexpr const char* kManifestFile = "manifest.json";

dtea::PipelineConfig config_or_exit(const std::string& path) {
  try {
    dtea::PipelineConfig c = path.empty() ? dtea::default_config() : dtea::load_config(path);
    c.validate();
    return c;
  } catch (const dtea::Error& e) {
    throw CommandError{kConfigError, e.what()};
  }
}

template <typename T>
std::array<dtea::FeatureMap<T>, dtea::kStageCount> load_inputs(const dtea::PipelineConfig& cfg,
                                                               const dtea::InputSource& src) {
  if (src.synthetic()) return dtea::synthetic_stages<T>(cfg, *src.synthetic_seed);
  std::array<dtea::FeatureMap<T>, dtea::kStageCount> out;
  for (std::size_t i = 0; i < dtea::kStageCount; ++i) {
    const auto& path = src.stage_paths[i];
    if (!fs::exists(path)) throw CommandError{kInputError, "stage " + std::to_string(i + 1) + " input not found: " + path};
    try {
      out[i] = dtea::load_tensor(path).cast<T>();
    } catch (const dtea::Error& e) {
      throw CommandError{kInputError, e.what()};
    }
  }
  return out;
}

template <typename T>
void check_finite(const dtea::RunArtifacts<T>& art) {
  for (std::size_t i = 0; i < dtea::kStageCount; ++i) {
    if (!art.outputs[i].all_finite()) {
      throw CommandError{kNumericError, "non-finite value in stage " + std::to_string(i + 1) + " output"};
    }
  }
  if (!art.f_str.all_finite() || !art.f_epg.all_finite()) {
    throw CommandError{kNumericError, "non-finite value in fused features"};
  }
}

template <typename T>
void run_pipeline(const dtea::PipelineConfig& cfg, const dtea::InputSource& src, const fs::path& out_dir) {
  const auto pipe = dtea::Pipeline<T>::build(cfg);
  const auto inputs = load_inputs<T>(cfg, src);
  dtea::RunArtifacts<T> art;
  try {
    art = pipe.forward(inputs);
  } catch (const dtea::ShapeError& e) {
    throw CommandError{kInputError, e.what()};
  } catch (const dtea::DomainError& e) {
    throw CommandError{kNumericError, e.what()};
  }
  check_finite(art);

  fs::create_directories(out_dir);
  dtea::RunManifest m;
  m.config = cfg;
  m.input = src;
  m.timings = art.timings;
  m.parameter_count = pipe.parameter_count();
  for (std::size_t i = 0; i < dtea::kStageCount; ++i) {
    dtea::save_tensor(art.outputs[i], out_dir / kOutputNames[i]);
    m.outputs.push_back(kOutputNames[i]);
  }
  dtea::write_json_file(dtea::hypergraph_json(art.graph, std::span<const T>(art.gates)), out_dir / kHypergraphFile);
  dtea::write_json_file(dtea::entropy_json(art.report), out_dir / kEntropyFile);
  m.outputs.push_back(kHypergraphFile);
  m.outputs.push_back(kEntropyFile);
  m.outputs.push_back(kManifestFile);
  dtea::write_json_file(dtea::manifest_json(m), out_dir / kManifestFile);
}

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> synthetic;
  std::array<std::string, dtea::kStageCount> stages;
  std::string manifest;
  std::string out;
};

int cmd_run(const RunOptions& o) {
  dtea::PipelineConfig cfg;
  dtea::InputSource src;
  const bool any_stage = std::any_of(o.stages.begin(), o.stages.end(), [](const auto& s) { return !s.empty(); });
  const bool all_stages = std::all_of(o.stages.begin(), o.stages.end(), [](const auto& s) { return !s.empty(); });
  if (!o.manifest.empty()) {
    if (o.synthetic || any_stage || !o.config.empty()) {
      throw CommandError{kInputError, "--manifest replaces --config, --synthetic and --stage-i"};
    }
    try {
      const auto m = dtea::manifest_from_json(dtea::read_json_file(o.manifest));
      cfg = m.config;
      cfg.validate();
      src = m.input;
    } catch (const dtea::Error& e) {
      throw CommandError{kConfigError, e.what()};
    }
  } else {
    cfg = config_or_exit(o.config);
    if (o.synthetic && any_stage) throw CommandError{kInputError, "give either --synthetic or --stage-1..4, not both"};
    if (!o.synthetic && !all_stages) throw CommandError{kInputError, "need --synthetic <seed> or all four --stage-i files"};
    src.synthetic_seed = o.synthetic;
    if (!o.synthetic) src.stage_paths = o.stages;
  }
  if (cfg.precision == dtea::Precision::f64) {
    run_pipeline<double>(cfg, src, o.out);
  } else {
    run_pipeline<float>(cfg, src, o.out);
  }
  std::cout << "wrote " << (dtea::kStageCount + 3) << " files to " << o.out << "\n";
  return kOk;
}

// Reads, validates and re-emits a stored document from a run directory.
int cmd_export(const std::string& run_dir, const char* file, void (*validate)(const json&), const std::string& out) {
  const fs::path path = fs::path(run_dir) / file;
  if (!fs::exists(path)) throw CommandError{kInputError, "missing run artifact: " + path.string()};
  json doc;
  try {
    doc = dtea::read_json_file(path);
    validate(doc);
  } catch (const dtea::Error& e) {
    throw CommandError{kInputError, e.what()};
  }
  if (out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    dtea::write_json_file(doc, out);
  }
  return kOk;
}

int cmd_selfcheck(const std::string& preset, double tol_scale, std::uint64_t seed) {
  dtea::selfcheck::Report rep;
  try {
    rep = dtea::selfcheck::run_all(preset, tol_scale, seed);
  } catch (const dtea::ConfigError& e) {
    throw CommandError{kConfigError, e.what()};
  }
  std::size_t total = 0;
  for (const auto& s : rep.suites) {
    total += s.cases;
    std::cout << s.name << ": " << (s.passed() ? "pass" : "FAIL") << "  cases=" << s.cases
              << " failures=" << s.failures << " max_error=" << s.max_error << "\n";
  }
  std::cout << "total cases: " << total << "\n";
  for (const auto& s : rep.suites) {
    if (!s.passed()) {
      std::cerr << "selfcheck failed in suite '" << s.name << "'\n" << s.first_failure.dump(2) << "\n";
      return kSelfcheckFailed;
    }
  }
  return kOk;
}

// Nearest-rank percentile of a sorted sample.
double percentile(const std::vector<double>& sorted, double p) {
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

double median(const std::vector<double>& sorted) {
  const std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

template <typename T>
json bench(const dtea::PipelineConfig& cfg, std::size_t reps) {
  const auto pipe = dtea::Pipeline<T>::build(cfg);
  const auto inputs = dtea::synthetic_stages<T>(cfg, cfg.seed);
  pipe.forward(inputs);  // warm-up
  std::array<std::vector<double>, 5> samples;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t = pipe.forward(inputs).timings;
    samples[0].push_back(t.preproc_ms);
    samples[1].push_back(t.str_ms);
    samples[2].push_back(t.epg_ms);
    samples[3].push_back(t.postproc_ms);
    samples[4].push_back(t.total_ms);
  }
  const char* names[] = {"preproc", "str", "epg", "postproc", "total"};
  json stages = json::object();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::sort(samples[i].begin(), samples[i].end());
    stages[names[i]] = {{"median_ms", median(samples[i])}, {"p95_ms", percentile(samples[i], 95.0)}};
  }
  return {{"schema_version", dtea::kSchemaVersion},
          {"config", dtea::config_json(cfg)},
          {"reps", reps},
          {"threads", dtea::thread_budget()},
          {"stages", std::move(stages)}};
}

int cmd_bench(const std::string& config, std::size_t reps, std::optional<std::size_t> threads) {
  const auto cfg = config_or_exit(config);
  if (reps == 0) throw CommandError{kConfigError, "--reps must be >= 1"};
  if (threads) dtea::set_thread_budget(*threads);
  const json out = cfg.precision == dtea::Precision::f64 ? bench<double>(cfg, reps) : bench<float>(cfg, reps);
  std::cout << out.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DTEA skip connection: hypergraph topology reconfiguration and entropy-gated fusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dtea::kToolVersion));

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline and write outputs, hypergraph, entropy and manifest");
  run_cmd->add_option("--config", run.config, "Config file (key = value); defaults built in when omitted");
  run_cmd->add_option("--synthetic", run.synthetic, "Seed for synthetic uniform [0,1) stage features");
  for (std::size_t i = 0; i < dtea::kStageCount; ++i) {
    run_cmd->add_option("--stage-" + std::to_string(i + 1), run.stages[i], "Stage feature tensor file");
  }
  run_cmd->add_option("--manifest", run.manifest, "Replay a run from its manifest.json (replaces --config and inputs)");
  run_cmd->add_option("--out", run.out, "Output directory")->required();

  std::string hg_dir, hg_out;
  auto* hg_cmd = app.add_subcommand("export-hypergraph", "Emit a run's hypergraph JSON");
  hg_cmd->add_option("run_dir", hg_dir, "Run output directory")->required();
  hg_cmd->add_option("--out", hg_out, "Write to file instead of stdout");

  std::string en_dir, en_out;
  auto* en_cmd = app.add_subcommand("entropy-report", "Emit a run's per-channel entropy report");
  en_cmd->add_option("run_dir", en_dir, "Run output directory")->required();
  en_cmd->add_option("--out", en_out, "Write to file instead of stdout");

  std::string preset = "tiny";
  double tol_scale = 1.0;
  std::uint64_t sc_seed = 2026;
  auto* sc_cmd = app.add_subcommand("selfcheck", "Oracle, gradient and invariant suites");
  sc_cmd->add_option("preset", preset, "Geometry for the gradient checks (tiny or default)");
  sc_cmd->add_option("--tolerance-scale", tol_scale, "Multiplies every tolerance (0 forces failures)")
      ->check(CLI::NonNegativeNumber);
  sc_cmd->add_option("--seed", sc_seed, "Base seed for the randomized suites");

  std::string bench_config;
  std::size_t reps = 50;
  std::optional<std::size_t> threads;
  auto* bench_cmd = app.add_subcommand("bench", "Median and p95 forward time per stage, as JSON");
  bench_cmd->add_option("--config", bench_config, "Config file; defaults built in when omitted");
  bench_cmd->add_option("--reps", reps, "Repetitions");
  bench_cmd->add_option("--threads", threads, "Thread budget (overrides DTEA_THREADS; 0 = auto)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*hg_cmd) return cmd_export(hg_dir, kHypergraphFile, dtea::validate_hypergraph_json, hg_out);
    if (*en_cmd) return cmd_export(en_dir, kEntropyFile, dtea::validate_entropy_json, en_out);
    if (*sc_cmd) return cmd_selfcheck(preset, tol_scale, sc_seed);
    if (*bench_cmd) return cmd_bench(bench_config, reps, threads);
  } catch (const CommandError& e) {
    std::cerr << "dtea: " << e.message << "\n";
    return e.code;
  } catch (const dtea::NumericError& e) {
    std::cerr << "dtea: " << e.what() << "\n";
    return kNumericError;
  } catch (const dtea::ConfigError& e) {
    std::cerr << "dtea: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "dtea: " << e.what() << "\n";
    return kInputError;
  }
  return kOk;
}
