#pragma once

#include <cstddef>
#include <functional>

namespace pstrp {

/// Runs fn(k) for k in [0, count) on up to `workers` threads. Each index is
/// handled exactly once; callers write results into index-addressed slots so
/// the output does not depend on scheduling. The first exception thrown by any
/// worker is rethrown on the calling thread.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace pstrp
