#pragma once

#include <cstddef>
#include <functional>

namespace oukit {

/// Global cap on worker threads. 0 means "use hardware concurrency".
void set_max_threads(std::size_t n) noexcept;
std::size_t max_threads() noexcept;

/// Runs body(i) for i in [0, count) across up to max_threads() workers using
/// static contiguous partitioning. The first exception thrown by any worker
/// is rethrown on the calling thread after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace oukit
