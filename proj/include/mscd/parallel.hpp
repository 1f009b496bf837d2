#pragma once

#include <cstddef>
#include <functional>

namespace mscd {

/// Worker cap used by batch-parallel loops. Defaults to 1.
int worker_count();
void set_worker_count(int workers);

/// Applies MSCD_THREADS (positive integer) when set; returns the count.
/// Results do not depend on the count.
int configure_workers_from_env();

/// Runs fn(i) for i in [0, n). With more than one worker the indices are split
/// into contiguous blocks; callers must write only to per-index outputs.
void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t)>& fn);

}  // namespace mscd
