#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gecvote {

inline unsigned resolve_threads(unsigned threads) {
  if (threads != 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs body(begin, end) over a static contiguous split of [0, count).
// threads == 0 uses hardware concurrency; the first exception is rethrown.
inline void parallel_for(
    std::size_t count, unsigned threads,
    const std::function<void(std::size_t, std::size_t)>& body) {
  const unsigned t = resolve_threads(threads);
  if (t <= 1 || count <= 1) {
    body(0, count);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(t, count);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = count * w / workers;
    const std::size_t end = count * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gecvote
