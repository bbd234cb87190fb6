#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace hamcurv {

/// Index-parallel loop over [0, n).  Results must be written to per-index
/// slots; the aggregation order is the caller's job (keep it deterministic).
template <class F>
void parallel_for(int n, int workers, F&& body) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& t : pool) t.join();
}

/// Fixed-arity (pairwise) reduction: bit-identical regardless of worker count.
inline double pairwise_sum(const double* xs, int n) {
  if (n <= 8) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  const int half = n / 2;
  return pairwise_sum(xs, half) + pairwise_sum(xs + half, n - half);
}

}  // namespace hamcurv
