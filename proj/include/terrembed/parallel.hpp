#pragma once

#include <cstddef>
#include <functional>

namespace terrembed {

/// Caps worker threads used by parallel_for (0 = hardware concurrency).
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Work items must write to disjoint outputs;
/// any reduction is the caller's job and must use a fixed order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace terrembed
