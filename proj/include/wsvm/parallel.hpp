#pragma once

#include <functional>

namespace wsvm {

// Worker count for task fan-out: WSVM_WORKERS when set, otherwise the
// hardware concurrency.
int worker_count();

// Runs fn(0..count-1) across workers. Nested calls degrade to serial
// execution; the first exception is rethrown after all tasks finish.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace wsvm
