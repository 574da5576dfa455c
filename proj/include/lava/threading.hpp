#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace lava {

// Worker count for parallel_for. Work is always partitioned into contiguous
// index ranges and every output element is written by exactly one thread
// running the same serial code, so results are bit-identical for any count.
int num_threads();
void set_num_threads(int n);

// Runs fn(lo, hi) over a partition of [0, n). Falls back to a direct call
// when n is small or one thread is configured.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn,
                         int64_t min_grain = 1) {
  if (n <= 0) return;
  int nt = num_threads();
  int64_t max_chunks = std::max<int64_t>(1, n / std::max<int64_t>(1, min_grain));
  int chunks = static_cast<int>(std::min<int64_t>(nt, max_chunks));
  if (chunks <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(chunks) - 1);
  int64_t base = n / chunks, rem = n % chunks, lo = 0;
  for (int c = 0; c < chunks; ++c) {
    int64_t hi = lo + base + (c < rem ? 1 : 0);
    if (c + 1 == chunks) {
      fn(lo, hi);
    } else {
      pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    lo = hi;
  }
  for (auto& t : pool) t.join();
}

}  // namespace lava
