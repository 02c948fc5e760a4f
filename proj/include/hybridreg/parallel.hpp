#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace hybridreg {

// HYBRIDREG_THREADS caps worker count; 0/unset means hardware concurrency.
inline int thread_count() {
  if (const char* env = std::getenv("HYBRIDREG_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(begin, end) over fixed-size blocks of [0, n). Blocks are an
// invariant of n alone, so float reductions done per block and combined in
// block order give identical results for any thread count.
inline void parallel_blocks(int n, int block,
                            const std::function<void(int, int, int)>& fn) {
  if (n <= 0) return;
  const int nblocks = (n + block - 1) / block;
  const int workers = std::min(thread_count(), nblocks);
  if (workers <= 1) {
    for (int b = 0; b < nblocks; ++b)
      fn(b, b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int b = next.fetch_add(1);
        if (b >= nblocks) break;
        fn(b, b * block, std::min(n, (b + 1) * block));
      }
    });
  }
  for (auto& th : pool) th.join();
}

// Deterministic sum reduction: per-block partials combined in block order.
inline double parallel_sum_blocks(
    int n, int block, const std::function<double(int, int)>& partial) {
  if (n <= 0) return 0.0;
  const int nblocks = (n + block - 1) / block;
  std::vector<double> parts(nblocks, 0.0);
  parallel_blocks(n, block, [&](int b, int i0, int i1) {
    parts[b] = partial(i0, i1);
  });
  double sum = 0.0;
  for (double p : parts) sum += p;
  return sum;
}

}  // namespace hybridreg
