#include "lava/threading.hpp"

#include <atomic>
#include <cstdlib>

namespace lava {

namespace {

int default_threads() {
  if (const char* env = std::getenv("LAVA_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return std::min(v, 64);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp<unsigned>(hc ? hc : 1, 1, 8));
}

std::atomic<int> g_threads{0};

}  // namespace

int num_threads() {
  int v = g_threads.load(std::memory_order_relaxed);
  if (v == 0) {
    v = default_threads();
    g_threads.store(v, std::memory_order_relaxed);
  }
  return v;
}

void set_num_threads(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

}  // namespace lava
