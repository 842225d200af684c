#pragma once

#include <cstddef>
#include <functional>

namespace dnetknn {

// Caps the number of worker threads used by the library. 0 restores the
// default (hardware concurrency).
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Splits [0, n) into `shards` contiguous ranges with boundaries that depend
// only on n and shards, and calls fn(shard, begin, end) for each. Shards are
// distributed over the worker threads; results written per shard can then be
// reduced in shard order, so sums do not depend on the thread count.
void parallel_shards(std::size_t n, std::size_t shards,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

// Parallel loop over [0, n) for independent iterations.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace dnetknn
