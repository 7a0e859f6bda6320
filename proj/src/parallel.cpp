#include "cpgan/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace cpgan {

namespace {
int g_threads = 1;
// Set inside worker threads so nested parallel_for calls run sequentially
// instead of multiplying threads.
thread_local bool t_in_worker = false;
}  // namespace

int num_threads() { return g_threads; }

void set_num_threads(int n) { g_threads = std::max(1, n); }

void parallel_for(index_t count,
                  const std::function<void(index_t, index_t)>& body) {
  if (count <= 0) return;
  const int workers =
      t_in_worker ? 1 : (int)std::min<index_t>(g_threads, count);
  if (workers <= 1) {
    body(0, count);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const index_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const index_t begin = w * chunk;
    const index_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&body, begin, end] {
      t_in_worker = true;
      body(begin, end);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace cpgan
