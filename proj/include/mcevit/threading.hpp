#pragma once

#include <cstddef>
#include <functional>

namespace mcevit {

// Process-wide cap on worker threads (CLI --threads). 0 means use
// hardware_concurrency.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n) on up to max_threads() workers, contiguous
// chunks per worker. Each index is processed by exactly one thread, so
// results are bitwise independent of the thread count. Exceptions from
// workers are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mcevit
