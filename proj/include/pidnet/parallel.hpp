#pragma once

#include <cstddef>
#include <functional>

namespace pidnet {

// Number of workers used by parallel_for. Initialized from PIDNET_THREADS
// (default: hardware concurrency). Results never depend on this value: every
// caller splits work into a fixed task list and each task owns its outputs.
int worker_count();
void set_worker_count(int workers);

// Runs fn(0) .. fn(tasks - 1), possibly concurrently. Returns once all tasks
// have finished; the first exception thrown by a task is rethrown.
void parallel_for(std::size_t tasks, const std::function<void(std::size_t)>& fn);

}  // namespace pidnet
