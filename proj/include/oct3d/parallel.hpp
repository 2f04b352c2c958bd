#ifndef OCT3D_PARALLEL_HPP
#define OCT3D_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace oct3d {

namespace detail {
inline std::atomic<std::size_t>& worker_count_ref() {
  static std::atomic<std::size_t> n{1};
  return n;
}
}  // namespace detail

/// Caps the number of worker threads used for per-sample parallel loops.
inline void set_worker_count(std::size_t n) { detail::worker_count_ref() = std::max<std::size_t>(1, n); }
inline std::size_t worker_count() { return detail::worker_count_ref(); }

/// Runs fn(worker, i) for i in [0, n). Work is split into contiguous static
/// ranges, so the item-to-worker assignment depends only on (n, workers).
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(std::size_t{0}, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(w, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace oct3d

#endif  // OCT3D_PARALLEL_HPP
