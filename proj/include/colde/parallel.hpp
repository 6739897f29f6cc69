#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace colde {

// COLDE_THREADS caps parallelism; default is hardware concurrency.
inline int max_threads() {
  if (const char* env = std::getenv("COLDE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(row_begin, row_end) over disjoint row ranges. Deterministic as long
// as fn writes only rows in its range.
inline void parallel_rows(int rows, const std::function<void(int, int)>& fn) {
  const int threads = std::min(max_threads(), std::max(1, rows));
  if (threads <= 1 || rows <= 1) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int chunk = (rows + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& th : pool) th.join();
}

}  // namespace colde
