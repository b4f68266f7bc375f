#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pagb {

namespace detail {
inline std::atomic<std::size_t>& worker_setting() {
  static std::atomic<std::size_t> n{1};
  return n;
}
inline bool& inside_parallel_region() {
  thread_local bool inside = false;
  return inside;
}
}  // namespace detail

/// Caps the number of worker threads used by parallel_for. Results never
/// depend on this value.
inline void set_thread_count(std::size_t n) { detail::worker_setting() = std::max<std::size_t>(1, n); }

inline std::size_t thread_count() { return detail::worker_setting(); }

/// Reads PAGB_THREADS, returning `fallback` when unset or invalid.
inline std::size_t threads_from_env(std::size_t fallback = 1) {
  if (const char* v = std::getenv("PAGB_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return fallback;
}

/// Calls fn(i) for i in [0, n). Work is handed out dynamically; callers must
/// write results by index so output is independent of scheduling. Nested
/// calls run serially on the calling worker.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1 || detail::inside_parallel_region()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    detail::inside_parallel_region() = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
    detail::inside_parallel_region() = false;
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace pagb
