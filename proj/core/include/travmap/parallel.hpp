#pragma once

#include <cstddef>
#include <functional>

namespace travmap {

/// Chunk size used by parallel_for. Fixed so that chunk boundaries, and hence
/// any per-chunk reduction order, do not depend on the worker count.
inline constexpr std::size_t kParallelChunk = 4096;

/// Number of workers for `threads` requested (0 means hardware concurrency).
int resolve_threads(int threads);

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks, distributed
/// over `threads` workers. fn must only write to disjoint, index-addressed
/// state; chunk assignment to workers is unspecified but chunk boundaries are
/// thread-count invariant. Exceptions from fn are rethrown on the caller.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

/// Number of chunks parallel_for uses for n items; for preallocating
/// per-chunk partial results that are combined serially in chunk order.
inline std::size_t parallel_chunk_count(std::size_t n) {
  return (n + kParallelChunk - 1) / kParallelChunk;
}

} // namespace travmap
