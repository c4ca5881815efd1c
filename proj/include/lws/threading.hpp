#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace lws {

// Number of workers used by parallel_for: hardware concurrency, capped by the
// LWS_FORGE_THREADS environment variable when set. Always >= 1.
int worker_count();

// Splits [0, n) into one contiguous chunk per worker and runs fn(begin, end)
// on each. Partitioning depends only on n and the worker count, and every
// element is owned by exactly one chunk, so results do not depend on timing.
// Runs inline when a single worker is available or the range is tiny.
void parallel_for(long long n, const std::function<void(long long, long long)>& fn);

} // namespace lws
