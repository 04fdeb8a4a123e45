#pragma once

#include <functional>

#include "spdecomp/types.hpp"

namespace spdecomp {

// Runs fn(0..n-1), distributing items over up to `threads` workers
// (threads <= 1 runs inline). Items are claimed from a shared counter; any
// exception escaping fn is rethrown on the calling thread after all workers
// finish. Callers that need deterministic output must write results into
// per-item slots, not shared accumulators.
void parallel_for(Index n, int threads, const std::function<void(Index)>& fn);

}  // namespace spdecomp
