#pragma once

#include <cstddef>
#include <functional>

namespace df {

/// Worker count for parallel loops: hardware concurrency, capped by the
/// DF_THREADS environment variable when it holds a positive integer.
std::size_t worker_count();

/// Runs fn(0..n-1) across up to worker_count() threads. Iterations must be
/// independent. The first exception thrown by any iteration is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace df
