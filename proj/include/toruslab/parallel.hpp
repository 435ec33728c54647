#pragma once

#include <cstddef>
#include <functional>

namespace toruslab {

/// Environment variable consulted for the worker count.
inline constexpr const char* kThreadsEnv = "TORUSLAB_THREADS";

/// Worker count from TORUSLAB_THREADS, else hardware concurrency (at least 1).
int default_thread_count();

/// Splits [0, count) into `chunks` contiguous ranges of near-equal size and runs
/// body(chunk, begin, end) over them on up to `threads` workers. Chunk boundaries
/// depend only on (count, chunks), never on the worker count, so per-chunk partial
/// results combined in chunk order are reproducible for any thread count.
void parallel_chunks(std::size_t count, std::size_t chunks, int threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace toruslab
