#ifndef HDRFUSE_PARALLEL_HPP
#define HDRFUSE_PARALLEL_HPP

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hdrfuse {

// Runs fn(chunk) for chunk = 0..n_chunks-1 on up to n_threads threads.
// Chunk c is always handled by worker c % n_threads, so any per-chunk
// output slots are filled identically for every thread count. Callers
// that reduce across chunks must do so sequentially in chunk order;
// that combination makes results independent of n_threads.
template <typename Fn>
void parallel_for_chunks(std::size_t n_chunks, unsigned n_threads, Fn &&fn) {
  if (n_threads <= 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c);
    return;
  }
  if (n_threads > n_chunks)
    n_threads = static_cast<unsigned>(n_chunks);

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (std::size_t c = t; c < n_chunks; c += n_threads)
          fn(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error)
          first_error = std::current_exception();
      }
    });
  }
  for (auto &w : workers)
    w.join();
  if (first_error)
    std::rethrow_exception(first_error);
}

// 0 means "pick a sensible default for this machine".
inline unsigned resolve_thread_count(unsigned requested) {
  if (requested > 0)
    return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

} // namespace hdrfuse

#endif
