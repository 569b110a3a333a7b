#pragma once

#include <functional>

namespace coxmap {

/// Runs fn(0..n-1) on up to `threads` workers. Tasks must be independent and
/// write only to their own slots so results do not depend on the schedule.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Hardware concurrency with a floor of 1.
int default_thread_count();

}  // namespace coxmap
