// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "cli_runner.hpp"
#include "dtea/export.hpp"
#include "dtea/pipeline.hpp"
#include "dtea/selfcheck.hpp"

namespace {

namespace fs = std::filesystem;
using dtea::json;
using dtea::testing::fresh_dir;
using dtea::testing::read_file;
using dtea::testing::run_cli;

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_s <= 0.0 || secs < limit_s;
  const bool pass = o.ok && in_time;
  if (!pass) ++failures;
  char timing[64];
  std::snprintf(timing, sizeof(timing), "%.2fs", secs);
  std::cout << id << " " << (pass ? "PASS" : "FAIL") << "  " << title << "  [" << timing;
  if (limit_s > 0.0) std::cout << " / limit " << limit_s << "s";
  std::cout << "]  " << o.detail;
  if (!in_time) std::cout << "  (runtime limit exceeded)";
  std::cout << std::endl;
}

std::string suite_detail(const dtea::selfcheck::SuiteResult& s) {
  std::ostringstream out;
  out << s.cases << " cases, " << s.failures << " failures, max error " << s.max_error;
  if (!s.passed() && !s.first_failure.is_null()) out << "; first failure " << s.first_failure.dump();
  return out.str();
}

Outcome ac4() {
  dtea::selfcheck::GradientCheckSetup setup;
  const auto g = dtea::selfcheck::gradient_suite(setup);
  std::ostringstream out;
  const std::pair<const char*, const dtea::oracle::GradCheckResult*> parts[] = {
      {"str", &g.str}, {"epg", &g.epg}, {"pipeline", &g.pipeline}};
  bool ok = g.suite.passed();
  for (const auto& [name, r] : parts) {
    ok = ok && r->checked >= dtea::selfcheck::kMinGradCoords;
    out << name << ": " << r->checked << " coords, max rel " << r->max_rel_error << ", flips " << r->flips << ", "
        << r->zero_checked << " exact-zero coords |fd| <= " << r->zero_max_abs << "; ";
  }
  if (!g.suite.passed()) out << "first failure " << g.suite.first_failure.dump();
  return {ok, out.str()};
}

Outcome ac5() {
  const auto dir = fresh_dir("ac5");
  const auto r = run_cli("run --config " + std::string(DTEA_SOURCE_DIR) + "/configs/default.cfg --synthetic 42 --out " +
                         dir.string());
  if (r.exit_code != 0) return {false, "run exited " + std::to_string(r.exit_code) + ": " + r.output};
  const auto m = dtea::read_json_file(dir / "manifest.json");
  const auto& c = m["config"];
  const auto& d = m["derived"];
  const bool ok = c["Cs"] == 32 && d["C"] == 128 && d["H_t"] == 7 && d["W_t"] == 7 && c["H"] == 224 &&
                  c["W"] == 224 && c["mu"] == 3.99 && c["K"] == 64 && c["K"].get<int>() * 2 == d["C"].get<int>();
  std::ostringstream out;
  out << "Cs=" << c["Cs"] << " C=" << d["C"] << " H_t=" << d["H_t"] << " W_t=" << d["W_t"] << " mu=" << c["mu"]
      << " K=" << c["K"];
  return {ok, out.str()};
}

Outcome ac7() {
  const auto dir = fresh_dir("ac7");
  const std::string cfg = std::string(DTEA_SOURCE_DIR) + "/configs/default.cfg";
  const auto a = run_cli("run --config " + cfg + " --synthetic 42 --out " + (dir / "t1").string(), "DTEA_THREADS=1");
  const auto b = run_cli("run --config " + cfg + " --synthetic 42 --out " + (dir / "t8").string(), "DTEA_THREADS=8");
  const auto c = run_cli("run --config " + cfg + " --synthetic 42 --out " + (dir / "t8b").string(), "DTEA_THREADS=8");
  if (a.exit_code != 0 || b.exit_code != 0 || c.exit_code != 0) return {false, "a run failed"};
  std::size_t compared = 0;
  for (const char* name : {"stage1.dtea", "stage2.dtea", "stage3.dtea", "stage4.dtea", "hypergraph.json", "entropy.json"}) {
    const auto ref = read_file(dir / "t1" / name);
    if (ref.empty() || ref != read_file(dir / "t8" / name) || ref != read_file(dir / "t8b" / name)) {
      return {false, std::string(name) + " differs"};
    }
    ++compared;
  }
  // The manifest records wall-clock timings; everything else must match.
  auto strip = [](json m) {
    m.erase("timings_ms");
    return m.dump();
  };
  const auto m1 = strip(dtea::read_json_file(dir / "t1" / "manifest.json"));
  if (m1 != strip(dtea::read_json_file(dir / "t8" / "manifest.json")) ||
      m1 != strip(dtea::read_json_file(dir / "t8b" / "manifest.json"))) {
    return {false, "manifest differs outside timings_ms"};
  }
  return {true, std::to_string(compared) + " artifacts bit-identical across 3 runs (threads 1, 8, 8); manifest equal except timings"};
}

Outcome ac8() {
  const auto cfg = dtea::default_config();
  const auto pipe = dtea::Pipeline<double>::build(cfg);
  const auto f_str = pipe.forward(dtea::synthetic_stages<double>(cfg, 42)).f_str;
  const auto& p = pipe.parameters().epg;
  const auto base = dtea::epg_forward(f_str, p).report;
  const std::size_t C = f_str.channels();
  const std::size_t taps = p.perturb.kernel_h * p.perturb.kernel_w;
  dtea::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> perm(C);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = C - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    dtea::FeatureMap<double> pf(C, f_str.height(), f_str.width());
    auto pp = p;
    for (std::size_t c = 0; c < C; ++c) {
      std::copy(f_str.channel(perm[c]).begin(), f_str.channel(perm[c]).end(), pf.channel(c).begin());
      std::copy_n(p.perturb.weights.begin() + static_cast<std::ptrdiff_t>(perm[c] * taps), taps,
                  pp.perturb.weights.begin() + static_cast<std::ptrdiff_t>(c * taps));
      pp.perturb.bias[c] = p.perturb.bias[perm[c]];
    }
    const auto r = dtea::epg_forward(pf, pp).report;
    for (std::size_t c = 0; c < C; ++c) {
      if (r.scores[c] != base.scores[perm[c]]) {
        return {false, "trial " + std::to_string(trial) + ": score of channel " + std::to_string(c) + " not exact"};
      }
    }
    std::vector<std::size_t> mapped;
    for (std::size_t j : r.selected) mapped.push_back(perm[j]);
    std::sort(mapped.begin(), mapped.end());
    if (mapped != base.selected) return {false, "trial " + std::to_string(trial) + ": selected set differs"};
  }
  return {true, "20 permutations of 128 channels: scores exact, selected sets equal"};
}

Outcome ac9() {
  const auto r = run_cli("bench --config " + std::string(DTEA_SOURCE_DIR) + "/configs/default.cfg --reps 50 --threads 1");
  if (r.exit_code != 0) return {false, "bench exited " + std::to_string(r.exit_code) + ": " + r.output};
  const auto j = json::parse(r.output);
  const double median = j["stages"]["total"]["median_ms"].get<double>();
  const double p95 = j["stages"]["total"]["p95_ms"].get<double>();
  std::ostringstream out;
  out << "median " << median << " ms, p95 " << p95 << " ms over 50 reps, threads=" << j["threads"] << " (budget 100 ms)";
  return {median < 100.0 && j["threads"] == 1, out.str()};
}

}  // namespace

int main() {
  namespace sc = dtea::selfcheck;
  criterion("AC1", "KNN matches brute-force oracle", 5.0, [] {
    const auto s = sc::knn_suite(2026);
    return Outcome{s.passed() && s.cases >= 200, suite_detail(s)};
  });
  criterion("AC2", "entropy and top-K match oracles", 5.0, [] {
    const auto e = sc::entropy_suite(2027);
    return Outcome{e.passed() && e.cases >= 100, suite_detail(e)};
  });
  criterion("AC3", "convolution matches naive oracle", 10.0, [] {
    const auto s = sc::conv_suite(2029);
    return Outcome{s.passed() && s.cases >= 50, suite_detail(s)};
  });
  criterion("AC4", "gradient checks on the tiny preset", 120.0, ac4);
  criterion("AC5", "default configuration conformance via run manifest", 5.0, ac5);
  criterion("AC6", "structural invariants on 50 random configs", 30.0, [] {
    const auto s = sc::shape_suite(2030, 50);
    return Outcome{s.passed() && s.cases >= 50, suite_detail(s)};
  });
  criterion("AC7", "determinism across runs and thread counts", 30.0, ac7);
  criterion("AC8", "channel-permutation property", 10.0, ac8);
  criterion("AC9", "performance budget, single thread", 0.0, ac9);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
