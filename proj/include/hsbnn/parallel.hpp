#pragma once

#include <cstddef>
#include <functional>

namespace hsbnn {

/// Name of the environment variable that overrides the worker count.
inline constexpr const char* kThreadsEnv = "HSBNN_THREADS";

/// Worker count: `requested` if positive, else $HSBNN_THREADS, else the
/// hardware concurrency (at least 1).
std::size_t resolve_threads(int requested = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is run
/// exactly once; the first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace hsbnn
