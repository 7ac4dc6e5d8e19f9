#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace embedlab {

// Process-wide worker count; 0 means hardware concurrency.
inline unsigned& thread_setting() {
  static unsigned n = 1;
  return n;
}

inline void set_threads(unsigned n) { thread_setting() = n; }

inline unsigned worker_count() {
  unsigned n = thread_setting();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// Runs body(i) for i in [0, n). Each index writes only its own result slot,
// so the outcome is independent of the worker count; reductions happen
// afterwards in index order.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned w = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto work = [&] {
    try {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        body(i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mu);
      if (!err) err = std::current_exception();
      next.store(n);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(w - 1);
  for (unsigned t = 1; t < w; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace embedlab
