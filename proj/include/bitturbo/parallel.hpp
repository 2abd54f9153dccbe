#pragma once

#include <cstddef>
#include <functional>

namespace bitturbo {

/// Worker count: hardware concurrency, capped by BITTURBO_THREADS when set.
/// Throws std::invalid_argument on a malformed BITTURBO_THREADS value.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Indices are handed
/// out dynamically; the first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers = 0);

}  // namespace bitturbo
