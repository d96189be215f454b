#pragma once

#include <cstddef>
#include <functional>

namespace rise {

/// Worker count: RISE_THREADS when set to a positive integer, else the
/// hardware concurrency.
unsigned thread_count();

/// Calls fn(i) once for every i in [0, count). Results must be written to
/// per-index slots so the outcome does not depend on scheduling. The
/// exception of the lowest failing index is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace rise
