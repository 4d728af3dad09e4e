#pragma once

#include <cstddef>
#include <functional>

namespace opgeom {

/// Number of worker threads used by `parallel_for`. Zero means "all cores".
void set_thread_count(std::size_t threads);
std::size_t thread_count();

/// Runs `body(i)` for every i in [begin, end), split into contiguous chunks
/// across worker threads. Each index is visited exactly once; callers must
/// only write to index-owned output so the result does not depend on the
/// number of threads.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

}  // namespace opgeom
