#pragma once

#include <cstddef>
#include <functional>

namespace mgmlmc {

/// Runs body(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any call is rethrown after all threads finish;
/// remaining indices are skipped once one has failed.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

/// Hardware concurrency, at least 1.
int default_workers();

}  // namespace mgmlmc
