#include "pidnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pidnet {
namespace {

int env_workers() {
  if (const char* env = std::getenv("PIDNET_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

class Pool {
 public:
  explicit Pool(int workers) { resize(workers); }
  ~Pool() { stop(); }

  int size() const { return static_cast<int>(threads_.size()) + 1; }

  void resize(int workers) {
    stop();
    std::lock_guard lock(mu_);
    shutdown_ = false;
    for (int i = 1; i < workers; ++i) threads_.emplace_back([this] { loop(); });
  }

  void run(std::size_t tasks, const std::function<void(std::size_t)>& fn) {
    std::unique_lock lock(run_mu_);
    {
      std::lock_guard guard(mu_);
      job_ = &fn;
      tasks_ = tasks;
      next_.store(0);
      pending_ = threads_.size();
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    work();
    std::unique_lock guard(mu_);
    done_cv_.wait(guard, [this] { return pending_ == 0; });
    job_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void stop() {
    {
      std::lock_guard lock(mu_);
      shutdown_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
    threads_.clear();
  }

  void work() {
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= tasks_) return;
      try {
        (*job_)(i);
      } catch (...) {
        std::lock_guard lock(mu_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
      }
      work();
      {
        std::lock_guard lock(mu_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::mutex run_mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t tasks_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool shutdown_ = false;
  std::exception_ptr error_;
};

Pool& pool() {
  static Pool p(env_workers());
  return p;
}

thread_local bool in_parallel_region = false;

}  // namespace

int worker_count() { return pool().size(); }

void set_worker_count(int workers) { pool().resize(std::max(1, workers)); }

void parallel_for(std::size_t tasks,
                  const std::function<void(std::size_t)>& fn) {
  if (tasks == 0) return;
  // Nested regions and single-task jobs run inline.
  if (tasks == 1 || in_parallel_region || pool().size() == 1) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  in_parallel_region = true;
  try {
    pool().run(tasks, [&](std::size_t i) {
      const bool outer = in_parallel_region;
      in_parallel_region = true;
      fn(i);
      in_parallel_region = outer;
    });
  } catch (...) {
    in_parallel_region = false;
    throw;
  }
  in_parallel_region = false;
}

}  // namespace pidnet
