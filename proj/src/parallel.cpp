#include "sti/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace sti {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int threads) { g_threads = std::max(1, threads); }
int thread_count() { return g_threads; }

void parallel_for(Index count, const std::function<void(Index)>& body) {
  const Index workers = std::min<Index>(g_threads, count);
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  const Index block = (count + workers - 1) / workers;
  for (Index t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        const Index end = std::min(count, (t + 1) * block);
        for (Index i = t * block; i < end; ++i) body(i);
      } catch (...) {
        errors[std::size_t(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace sti
