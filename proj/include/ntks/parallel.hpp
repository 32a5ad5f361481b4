#pragma once

#include <cstddef>
#include <functional>

namespace ntks {

// Worker count: NTKS_THREADS if set (>= 1), otherwise hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker
// and results must be written to index-owned slots, which keeps the output
// independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ntks
