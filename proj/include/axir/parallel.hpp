#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <vector>

namespace axir {

/// requested > 0 wins; otherwise AXIR_THREADS; otherwise available cores.
int resolve_threads(int requested);

/// Runs fn(i) for i in [0, n) on `threads` OpenMP threads. Each index must
/// write only to its own output slot. If any call throws, the exception of
/// the lowest failing index is rethrown after the loop, so failures are the
/// same for every thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace axir
