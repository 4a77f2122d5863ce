#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace twoscale {

/// Name of the environment variable that sets the worker count.
inline constexpr const char* kThreadsEnv = "TWOSCALE_THREADS";

/// Worker count from TWOSCALE_THREADS, else hardware concurrency (>= 1).
std::size_t default_thread_count();

/// Overrides the worker count for the current process (0 restores the
/// environment/hardware default). Affects speed only.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

/// Runs body(i) for i in [0, n) on the worker pool. Bodies must write only
/// to slot i of their output; the caller reduces in index order afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Convenience: evaluates f(i) for every index and returns results in
/// index order.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& f) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

}  // namespace twoscale
