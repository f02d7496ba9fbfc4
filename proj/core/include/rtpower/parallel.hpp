#pragma once

#include <functional>

namespace rtpower {

// Runs fn(0) .. fn(n_tasks - 1) on up to n_threads workers pulling from a
// shared atomic counter. Task index, not submission order, is the identity:
// callers derive any randomness from the index, so results do not depend on
// scheduling. The first exception thrown by a task is rethrown after all
// workers finish. n_threads <= 1 runs serially; n_threads == 0 uses
// std::thread::hardware_concurrency().
void parallel_for(long n_tasks, int n_threads,
                  const std::function<void(long)>& fn);

} // namespace rtpower
