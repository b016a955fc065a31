#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace rpo {

// Runs fn(i) for i in [0, count) on at most max_in_flight threads. Each
// worker claims the next unclaimed index, so no more than max_in_flight calls
// are ever active. fn must not throw.
template <typename Fn>
void bounded_parallel_for(std::size_t count, std::size_t max_in_flight,
                          Fn&& fn) {
  if (count == 0) return;
  const std::size_t workers = std::max<std::size_t>(
      1, std::min(count, max_in_flight));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count;
           i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
}

}  // namespace rpo
