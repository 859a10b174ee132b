#pragma once

#include <cstddef>
#include <functional>

namespace mvgmn {

/// Worker cap: MVGMN_THREADS if set and positive, otherwise the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Index i is always
/// handled by worker i % workers. Rethrows the first exception by index.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace mvgmn
