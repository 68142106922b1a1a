// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace ptp {

/// Runs fn(worker, begin, end) over contiguous index slices, one slice per
/// worker. Slice boundaries depend only on (n, workers), so anything reduced
/// in worker order is reproducible for a fixed worker count. workers <= 1
/// degenerates to a direct call on the calling thread.
inline void parallel_slices(int n, int workers,
                            const std::function<void(int, int, int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers <= 1) {
    if (n > 0) fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int base = n / workers;
  const int extra = n % workers;
  int begin = 0;
  for (int w = 0; w < workers; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    const int end = begin + len;
    pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

inline int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace ptp
