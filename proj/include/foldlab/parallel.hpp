#pragma once

#include <cstddef>
#include <functional>

namespace foldlab {

/// Global worker cap used by every parallel loop. Defaults to FOLDLAB_THREADS,
/// else hardware concurrency.
int thread_count();
void set_thread_count(int threads);

/// Runs body(begin, end) over [0, count) split into contiguous chunks.
/// Chunk boundaries depend only on count and chunks, never on the thread
/// count, so reductions over chunks are reproducible.
void parallel_chunks(std::size_t count, std::size_t chunks,
                     const std::function<void(std::size_t chunk, std::size_t begin,
                                              std::size_t end)>& body);

/// Convenience: body(i) for every i in [0, count).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace foldlab
