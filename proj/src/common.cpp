#include "qpblend/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace qpblend {

int worker_count() {
  static const int cached = [] {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("QPBLEND_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) n = std::min(n, cap);
    }
    return n;
  }();
  return cached;
}

void parallel_for(int n, const std::function<void(int)>& fn, int min_grain) {
  const int workers = std::min(worker_count(), std::max(1, n / std::max(1, min_grain)));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace qpblend
