#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cleanfield {

namespace detail {
inline std::atomic<unsigned>& thread_override() {
  static std::atomic<unsigned> value{0};
  return value;
}
}  // namespace detail

/// 0 restores the default (CLEANFIELD_THREADS, then hardware concurrency).
inline void set_thread_count(unsigned n) { detail::thread_override() = n; }

inline unsigned thread_count() {
  if (unsigned n = detail::thread_override(); n > 0) return n;
  if (const char* env = std::getenv("CLEANFIELD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end) over contiguous slices of [0, n). Each index is
/// visited exactly once; callers write to disjoint slots so the result does
/// not depend on the number of workers.
template <class Body>
void parallel_for(std::size_t n, Body&& body, unsigned workers = 0) {
  if (n == 0) return;
  if (workers == 0) workers = thread_count();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace cleanfield
