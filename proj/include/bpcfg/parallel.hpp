#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bpcfg {

// Runs body(i) for i in [0, n) on up to `workers` threads. Work is handed
// out dynamically, so bodies must write only to their own index. The first
// exception thrown by any body is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    for (std::size_t t = 1; t < count; ++t) pool.emplace_back(run);
    run();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace bpcfg
