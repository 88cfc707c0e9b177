#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace fieldslam {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1, std::min(8, static_cast<int>(hw)));
}

// Static contiguous partition of [0, n) into n_slots ranges, one worker per
// slot. Each slot processes its range in index order and accumulators are
// reduced in slot order afterwards, so results do not depend on scheduling.
inline void parallel_for_slots(int n, int n_slots,
                               const std::function<void(int begin, int end, int slot)>& fn) {
  n_slots = std::max(1, std::min(n_slots, n));
  if (n <= 0) return;
  if (n_slots == 1) {
    fn(0, n, 0);
    return;
  }
  const int chunk = (n + n_slots - 1) / n_slots;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(n_slots));
  for (int s = 0; s < n_slots; ++s) {
    const int begin = s * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end, s] { fn(begin, end, s); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace fieldslam
