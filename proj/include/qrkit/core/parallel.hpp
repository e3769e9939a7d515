#pragma once

#include <qrkit/core/errors.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qrkit {

namespace detail {
inline std::atomic<int>& max_threads_storage() {
  static std::atomic<int> value{1};
  return value;
}
}  // namespace detail

/// Upper bound on threads used for block-level parallel loops. 1 (the default)
/// runs everything on the calling thread.
inline void set_max_threads(int n) { detail::max_threads_storage().store(std::max(1, n)); }
inline int max_threads() { return detail::max_threads_storage().load(); }

/// Runs fn(i) for i in [0, count). Work is split into contiguous chunks, one
/// per thread; callers must write only to disjoint outputs so the result does
/// not depend on the thread count. The first exception thrown is rethrown.
template <class Fn>
void parallel_for(Index count, Fn&& fn, Index min_chunk = 64) {
  const Index threads = std::min<Index>(max_threads(), (count + min_chunk - 1) / std::max<Index>(min_chunk, 1));
  if (threads <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  const Index chunk = (count + threads - 1) / threads;
  for (Index t = 0; t < threads; ++t) {
    const Index begin = t * chunk;
    const Index end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace qrkit
