#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bodybench {

// One worker per hardware thread, at least 1.
inline int default_jobs() {
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index runs
// exactly once; the first exception (lowest index) is rethrown after all
// threads finish. jobs <= 1 runs inline in index order.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  if (n <= 0) return;
  if (jobs <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_at = n;
  std::exception_ptr error;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_at) {
          failed_at = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(jobs, n);
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace bodybench
