#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace latentrob {

/// Process-wide worker count used by Monte Carlo and sweep loops (>= 1).
inline std::atomic<unsigned>& worker_threads() {
  static std::atomic<unsigned> n{1};
  return n;
}

/// Runs fn(i) for i in [0, count). Work items are claimed dynamically, so fn
/// must write its result into a slot owned by i. The first exception thrown
/// by any item is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, worker_threads().load()), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace latentrob
