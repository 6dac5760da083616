// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace indm {

/// Worker count: INDM_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

/// Runs body(chunk) for chunk in [0, n_chunks). Chunks are the unit of
/// determinism: callers derive per-chunk random streams from the chunk index,
/// so output is independent of how many threads execute them. The first
/// exception thrown by any chunk is rethrown after all workers finish.
void parallel_for(std::size_t n_chunks, const std::function<void(std::size_t)>& body);

}  // namespace indm
