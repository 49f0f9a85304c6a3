#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace reachsec {

/// Worker count for parallel sections: REACHSEC_WORKERS if set, otherwise the
/// available hardware parallelism. Results never depend on this value; work
/// items are keyed by index and reduced deterministically.
inline int worker_count() {
  if (const char* env = std::getenv("REACHSEC_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(std::min<long>(v, 256));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, count). fn must only write to per-index state.
template <typename Fn>
void parallel_for(std::int64_t count, Fn&& fn) {
  const int workers = std::min<std::int64_t>(worker_count(), std::max<std::int64_t>(count, 1));
  if (workers <= 1 || count <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace reachsec
