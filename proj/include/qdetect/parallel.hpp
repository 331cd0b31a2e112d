#pragma once

// Deterministic fan-out over index ranges.  Work is cut into fixed chunks
// written to caller-owned slots, so results never depend on the thread count.

#include <cstddef>
#include <functional>

namespace qdetect {

// Worker count: QDETECT_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

// Calls fn(begin, count) for consecutive chunks covering [0, total).
// Exceptions from any chunk are rethrown on the calling thread (first by
// chunk order).
void parallel_chunks(std::size_t total, std::size_t chunk,
                     const std::function<void(std::size_t begin, std::size_t count)>& fn);

}  // namespace qdetect
