#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace sobotrim {

// Worker cap for the whole process; 1 by default.  Reductions stay
// deterministic: work is cut into fixed-size chunks independent of the
// thread count and per-chunk partials are combined in chunk order.
void set_thread_count(int n);
int thread_count();

inline constexpr int64_t kChunk = 4096;

// body(begin, end) over [0, n) split into kChunk ranges.
template <typename Body>
void parallel_for(int64_t n, Body&& body) {
  const int workers = thread_count();
  const int64_t nchunks = (n + kChunk - 1) / kChunk;
  if (workers <= 1 || nchunks <= 1) {
    for (int64_t c = 0; c < nchunks; ++c)
      body(c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int64_t c = w; c < nchunks; c += workers)
        body(c * kChunk, std::min(n, (c + 1) * kChunk));
    });
  }
  for (auto& t : pool) t.join();
}

// Deterministic sum of f(i) over [0, n): per-chunk partials summed in order.
template <typename F>
double parallel_sum(int64_t n, F&& f) {
  const int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<size_t>(nchunks), 0.0);
  parallel_for(n, [&](int64_t b, int64_t e) {
    double acc = 0.0;
    for (int64_t i = b; i < e; ++i) acc += f(i);
    partial[static_cast<size_t>(b / kChunk)] = acc;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace sobotrim
