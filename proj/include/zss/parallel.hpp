#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "zss/common.hpp"

namespace zss {

// Fixed-size worker pool. Work is partitioned into one contiguous chunk per
// worker, so the set of (worker, indices) assignments is a pure function of
// (n, thread count): results are deterministic for a fixed thread count.
class ThreadPool {
 public:
  explicit ThreadPool(int threads) : stop_(false) {
    if (threads < 1) threads = 1;
    for (int t = 0; t < threads; ++t) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return static_cast<int>(workers_.size()); }

  /// Runs fn(i) for i in [0, n). Blocks until all chunks complete.
  /// Exceptions from fn propagate to the caller (first one wins).
  void parallel_for(Index n, const std::function<void(Index)>& fn) {
    if (n <= 0) return;
    int nt = size();
    if (nt == 1 || n == 1) {
      for (Index i = 0; i < n; ++i) fn(i);
      return;
    }
    Index chunk = (n + nt - 1) / nt;
    std::vector<std::function<void()>> tasks;
    for (Index lo = 0; lo < n; lo += chunk) {
      Index hi = std::min(n, lo + chunk);
      tasks.push_back([lo, hi, &fn] {
        for (Index i = lo; i < hi; ++i) fn(i);
      });
    }
    run_all(tasks);
  }

  /// Runs fn(worker_index, lo, hi) over a fixed partition of [0, n).
  /// worker_index ranges over [0, chunks); chunk boundaries depend only on
  /// n and the pool size.
  void parallel_chunks(Index n, const std::function<void(int, Index, Index)>& fn) {
    if (n <= 0) return;
    int nt = size();
    Index chunk = (n + nt - 1) / nt;
    std::vector<std::function<void()>> tasks;
    int widx = 0;
    for (Index lo = 0; lo < n; lo += chunk, ++widx) {
      Index hi = std::min(n, lo + chunk);
      int w = widx;
      tasks.push_back([w, lo, hi, &fn] { fn(w, lo, hi); });
    }
    run_all(tasks);
  }

  /// Number of chunks parallel_chunks will use for n items.
  int chunk_count(Index n) const {
    if (n <= 0) return 0;
    Index chunk = (n + size() - 1) / size();
    return static_cast<int>((n + chunk - 1) / chunk);
  }

 private:
  void run_all(std::vector<std::function<void()>>& tasks) {
    std::exception_ptr err;
    std::size_t remaining = tasks.size();
    std::mutex done_mu;
    std::condition_variable done_cv;
    {
      std::unique_lock<std::mutex> lk(mu_);
      for (auto& t : tasks) {
        queue_.push_back([&, task = &t] {
          try {
            (*task)();
          } catch (...) {
            std::unique_lock<std::mutex> dl(done_mu);
            if (!err) err = std::current_exception();
          }
          std::unique_lock<std::mutex> dl(done_mu);
          if (--remaining == 0) done_cv.notify_all();
        });
      }
    }
    cv_.notify_all();
    std::unique_lock<std::mutex> dl(done_mu);
    done_cv.wait(dl, [&] { return remaining == 0; });
    if (err) std::rethrow_exception(err);
  }

  void worker_loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [this] { return stop_ || !queue_.empty(); });
        if (stop_ && queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.erase(queue_.begin());
      }
      job();
    }
  }

  std::vector<std::thread> workers_;
  std::vector<std::function<void()>> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_;
};

/// Process-wide pool used by tensor kernels. Call set_thread_count before any
/// heavy work; resizing tears down the old pool.
inline std::unique_ptr<ThreadPool>& pool_storage() {
  static std::unique_ptr<ThreadPool> pool = std::make_unique<ThreadPool>(
      static_cast<int>(std::thread::hardware_concurrency()));
  return pool;
}

inline ThreadPool& global_pool() { return *pool_storage(); }

inline void set_thread_count(int n) { pool_storage() = std::make_unique<ThreadPool>(n); }

}  // namespace zss
