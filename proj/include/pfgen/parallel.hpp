#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace pfgen {

// Worker count: PFGN_THREADS if set to a positive integer, else hardware
// concurrency (at least 1).
inline int worker_count() {
  if (const char* env = std::getenv("PFGN_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work items must be independent; determinism is
// preserved because each index owns its inputs and output slot. The first
// exception thrown by a worker is rethrown on the calling thread.
inline void parallel_for(long n, const std::function<void(long)>& fn) {
  if (n <= 0) return;
  int workers = worker_count();
  if (workers <= 1 || n == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<long>(workers) > n) workers = static_cast<int>(n);

  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      long lo = n * w / workers;
      long hi = n * (w + 1) / workers;
      try {
        for (long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace pfgen
