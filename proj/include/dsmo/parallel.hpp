#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace dsmo {

/// Runs fn(i) for i in [0, n) on up to `threads` std::threads in contiguous
/// chunks. With threads <= 1 the loop runs inline. The first exception thrown
/// by any worker is rethrown after all workers join. Results must not depend
/// on the chunking, which holds whenever fn(i) touches only slot i.
inline void parallel_for(long n, int threads,
                         const std::function<void(long)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  const long workers = std::min<long>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (long w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const long lo = n * w / workers;
      const long hi = n * (w + 1) / workers;
      try {
        for (long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dsmo
