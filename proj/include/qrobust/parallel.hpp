#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace qrobust {

/// Runs f(i) for i in [0, n) across hardware threads. f must only write to
/// slot i of caller-owned storage; callers reduce afterwards in index order.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = std::min<std::size_t>(std::max(1U, std::thread::hardware_concurrency()), n);
  if (workers <= 1 || n < 8) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) f(i);
    });
  }
}

}  // namespace qrobust
