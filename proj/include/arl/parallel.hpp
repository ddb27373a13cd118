#ifndef ARL_PARALLEL_HPP
#define ARL_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace arl {

/// Runs fn(i) for i in [0, n) on up to `threads` workers.  Work items must
/// write to disjoint outputs; the caller reduces afterwards in index order so
/// results never depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (n == 0) return;
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Fixed partition of [0, n) into at most `max_chunks` contiguous blocks.
/// Depends only on n, never on the thread count.
struct ChunkPlan {
  std::size_t n = 0;
  std::size_t chunks = 0;

  ChunkPlan(std::size_t n_items, std::size_t max_chunks) : n(n_items), chunks(std::min(n_items, max_chunks)) {}

  std::size_t begin(std::size_t c) const { return c * n / chunks; }
  std::size_t end(std::size_t c) const { return (c + 1) * n / chunks; }
};

}  // namespace arl

#endif  // ARL_PARALLEL_HPP
