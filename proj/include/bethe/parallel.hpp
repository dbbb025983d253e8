#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace bethe {

// 0 means auto: BETHE_COVERS_THREADS if set, else hardware concurrency.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BETHE_COVERS_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Work is claimed dynamically, but callers write
// into per-index slots, so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  int t = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), n);
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Sum of term(i) over [0, n): chunks of `chunk` terms are summed in parallel and
// the chunk partials are then added sequentially, giving bit-stable totals.
template <class T>
T chunked_sum(std::size_t n, int threads, const std::function<T(std::size_t)>& term, std::size_t chunk = 64) {
  std::size_t nchunks = (n + chunk - 1) / chunk;
  std::vector<T> partial(nchunks, T(0));
  parallel_for(nchunks, threads, [&](std::size_t c) {
    T s(0);
    std::size_t hi = std::min(n, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < hi; ++i) s += term(i);
    partial[c] = s;
  });
  T total(0);
  for (const T& p : partial) total += p;
  return total;
}

}  // namespace bethe
