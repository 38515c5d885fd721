#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace certipose {

/// Worker count used when the caller passes jobs <= 0.
inline int default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/**
 * @brief Calls fn(i) for i in [0, count) on up to `jobs` threads.
 *
 * Work is handed out by an atomic counter, so fn must only write to
 * per-index state. fn must not throw.
 */
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const int workers = static_cast<int>(std::min<std::size_t>(count, static_cast<std::size_t>(jobs <= 0 ? default_jobs() : jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace certipose
