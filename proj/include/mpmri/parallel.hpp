#pragma once

#include <cstddef>
#include <functional>

namespace mpmri {

// Worker count from MPMRI_THREADS (0 or unset = hardware concurrency).
unsigned thread_count();

// Calls fn(begin, end) over disjoint contiguous chunks of [0, n). Chunks are
// fixed by n and the thread count, so per-index work is deterministic; the
// caller owns any reduction and must do it in index order.
void parallel_for(std::size_t n, std::function<void(std::size_t, std::size_t)> const &fn);

} // namespace mpmri
