#pragma once

#include <cstddef>
#include <functional>

namespace qsm {

/// Process-wide worker cap for parallel_chunks. Defaults to 1 (serial).
void set_max_threads(int n);
int max_threads();

/// Run fn(lo, hi) over a partition of [0, n) into contiguous chunks, at most
/// max_threads() of them, each on its own thread. Chunks must not share
/// output elements; every chunk writes results only at its own indices, so
/// the output is identical for any thread count.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace qsm
