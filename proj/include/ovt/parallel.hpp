#pragma once

#include <cstddef>
#include <functional>

namespace ovt {

/// Worker cap for the embedding passes, from OVT_THREADS (default 1).
std::size_t configured_thread_count();

/// Runs fn(0..n-1) across at most configured_thread_count() threads. Each
/// index must write only its own output slot, so the result is identical to
/// the sequential loop regardless of thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ovt
