#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace distill {

/// Number of worker threads used by parallel_for. 0 means hardware concurrency.
inline std::size_t& parallel_threads() {
  static std::size_t n = 0;
  return n;
}

namespace detail {
inline bool& inside_parallel() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// Runs f(i) for i in [0, count). Work items must write to disjoint
/// outputs; results are therefore independent of scheduling. Nested calls
/// run serially on the calling worker.
template <typename Func>
void parallel_for(std::size_t count, Func&& f) {
  std::size_t workers = parallel_threads() ? parallel_threads() : std::thread::hardware_concurrency();
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1 || detail::inside_parallel()) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      detail::inside_parallel() = true;
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace distill
