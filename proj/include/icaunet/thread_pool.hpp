#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <future>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace icaunet {

// Fixed-size FIFO worker pool. Tasks must not block on other tasks of the
// same pool.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t workers);
  ~ThreadPool();
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return threads_.size(); }

  std::future<void> submit(std::function<void()> task);

  // Runs fn(0..count-1) on the pool and waits; the first exception thrown by
  // any task is rethrown after all tasks finish.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop();

  std::vector<std::thread> threads_;
  std::queue<std::packaged_task<void()>> queue_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
};

// Runs fn(0..count-1) on `pool` when given, otherwise inline in index order.
void run_indexed(ThreadPool* pool, std::size_t count, const std::function<void(std::size_t)>& fn);

// Worker count from ICAUNET_THREADS when set and positive, else `fallback`.
std::size_t default_worker_count(std::size_t fallback);

}  // namespace icaunet
