#pragma once

#include <cstddef>
#include <functional>

namespace pt {

// Worker count from PATH_TRANSPORT_THREADS (unset or 0 = hardware concurrency).
unsigned worker_count();

// Runs body(0..count-1) across worker_count() threads. Results must be written
// by index. If any call throws, the exception from the lowest index is
// rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace pt
