#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gam {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs body(begin, end) over a fixed contiguous partition of [0, count).
// Chunk boundaries depend only on count and the resolved thread cap, and each
// chunk writes its own output slots, so results match a sequential run.
inline void parallel_for_chunks(std::size_t count, unsigned threads,
                                const std::function<void(std::size_t, std::size_t)>& body) {
  const unsigned n_threads = resolve_threads(threads);
  if (count == 0) return;
  if (n_threads <= 1 || count < 2) {
    body(0, count);
    return;
  }
  const std::size_t n_chunks = std::min<std::size_t>(n_threads, count);
  const std::size_t base = count / n_chunks;
  const std::size_t extra = count % n_chunks;

  std::vector<std::thread> workers;
  workers.reserve(n_chunks);
  std::exception_ptr first_error;
  std::mutex error_mutex;

  std::size_t begin = 0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    const std::size_t end = begin + len;
    workers.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gam
