// Copyright (c) 2026, The DTEA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace dtea {

namespace detail {

inline std::size_t threads_from_env() {
  const char* raw = std::getenv("DTEA_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  const unsigned long value = std::strtoul(raw, &end, 10);
  if (end == raw || *end != '\0') return 0;
  return static_cast<std::size_t>(value);
}

inline std::atomic<std::size_t>& thread_budget_slot() {
  static std::atomic<std::size_t> slot{threads_from_env()};
  return slot;
}

}  // namespace detail

/// Upper bound on worker threads used by internal loops. 0 means one per
/// hardware thread. Initialised from DTEA_THREADS.
inline std::size_t thread_budget() {
  const std::size_t requested = detail::thread_budget_slot().load();
  if (requested != 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

inline void set_thread_budget(std::size_t threads) { detail::thread_budget_slot().store(threads); }

/// Runs body(i) for i in [0, n). Each index is visited by exactly one worker
/// and workers own contiguous index ranges, so any body that writes only to
/// slot i produces the same bits regardless of the thread count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dtea
