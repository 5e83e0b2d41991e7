#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace rsfair {

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

// Static contiguous partition of [0, count) over `workers` threads. Each
// index is processed by exactly one worker, so slot-isolated writes make the
// result independent of the worker count and of scheduling.
inline void parallel_for(std::size_t count, int workers,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  workers = resolve_workers(workers);
  if (count == 0) return;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  if (w <= 1) {
    body(0, count);
    return;
  }
  const std::size_t base = count / w;
  const std::size_t rem = count % w;
  std::vector<std::thread> threads;
  threads.reserve(w - 1);
  std::size_t begin = 0;
  for (std::size_t i = 0; i < w; ++i) {
    const std::size_t len = base + (i < rem ? 1 : 0);
    const std::size_t end = begin + len;
    if (i + 1 == w) {
      body(begin, end);
    } else {
      threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    begin = end;
  }
  for (auto& t : threads) t.join();
}

}  // namespace rsfair
