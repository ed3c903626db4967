// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace anytsr {

// Fixed-size worker pool with static range partitioning. Every output element
// is written by exactly one task and the per-element operation order does not
// depend on the thread count, so results are bitwise reproducible run to run.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int threads() const { return nthreads_; }

  // f(begin, end) over [0, n), one contiguous chunk per thread. Nested calls
  // (from inside a worker) run inline to avoid deadlock.
  void run(int64_t n, const std::function<void(int64_t, int64_t)>& f) {
    if (n <= 0) return;
    if (nthreads_ == 1 || n == 1 || in_worker_) {
      f(0, n);
      return;
    }
    const int parts = static_cast<int>(std::min<int64_t>(nthreads_, n));
    const int64_t chunk = (n + parts - 1) / parts;

    std::mutex done_mu;
    std::condition_variable done_cv;
    int pending = parts - 1;

    for (int p = 1; p < parts; ++p) {
      const int64_t b = p * chunk;
      const int64_t e = std::min<int64_t>(n, b + chunk);
      enqueue([&, b, e] {
        f(b, e);
        std::lock_guard<std::mutex> lk(done_mu);
        if (--pending == 0) done_cv.notify_one();
      });
    }
    f(0, std::min<int64_t>(n, chunk));
    std::unique_lock<std::mutex> lk(done_mu);
    done_cv.wait(lk, [&] { return pending == 0; });
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

 private:
  ThreadPool() {
    int nt = static_cast<int>(std::thread::hardware_concurrency());
    if (nt < 1) nt = 1;
    if (const char* env = std::getenv("ANYTSR_THREADS")) {
      const int cap = std::atoi(env);
      if (cap >= 1) nt = std::min(nt, cap);
    }
    nthreads_ = nt;
    for (int i = 0; i < nt - 1; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void enqueue(std::function<void()> job) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      queue_.push_back(std::move(job));
    }
    cv_.notify_one();
  }

  void worker_loop() {
    in_worker_ = true;
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;  // stop_ set and drained
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
    }
  }

  int nthreads_ = 1;
  std::vector<std::thread> workers_;
  std::deque<std::function<void()>> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  static thread_local bool in_worker_;
};

inline thread_local bool ThreadPool::in_worker_ = false;

// Deterministic parallel loop over [0, n).
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& f) {
  ThreadPool::instance().run(n, f);
}

}  // namespace anytsr
