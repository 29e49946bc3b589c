#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace dtwmatch {

/// Fixed set of `p` execution lanes. `run(fn)` invokes fn(lane) once on every
/// lane and returns when all have finished; the calling thread acts as lane 0.
/// Work is partitioned statically by the callers, there is no work stealing.
class LanePool {
public:
  explicit LanePool(std::size_t lanes) : lanes_(std::max<std::size_t>(lanes, 1)) {
    threads_.reserve(lanes_ - 1);
    for (std::size_t lane = 1; lane < lanes_; ++lane) {
      threads_.emplace_back([this, lane] { worker_loop(lane); });
    }
  }

  LanePool(const LanePool&) = delete;
  LanePool& operator=(const LanePool&) = delete;

  ~LanePool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) { t.join(); }
  }

  [[nodiscard]] std::size_t size() const noexcept { return lanes_; }

  void run(const std::function<void(std::size_t)>& fn) {
    if (lanes_ == 1) {
      fn(0);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      task_ = &fn;
      pending_ = lanes_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    std::exception_ptr local_error;
    try {
      fn(0);
    } catch (...) {
      local_error = std::current_exception();
    }
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
    if (local_error) { std::rethrow_exception(local_error); }
    if (error_) { std::rethrow_exception(std::exchange(error_, nullptr)); }
  }

  /// Contiguous block [begin, end) of `count` items owned by `lane`.
  [[nodiscard]] static std::pair<std::size_t, std::size_t> block(std::size_t count, std::size_t lanes,
                                                                 std::size_t lane) noexcept {
    const std::size_t chunk = (count + lanes - 1) / lanes;
    const std::size_t begin = std::min(count, lane * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    return {begin, end};
  }

private:
  void worker_loop(std::size_t lane) {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task = nullptr;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) { return; }
        seen = generation_;
        task = task_;
      }
      std::exception_ptr err;
      try {
        (*task)(lane);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        if (err && !error_) { error_ = err; }
        if (--pending_ == 0) { done_.notify_one(); }
      }
    }
  }

  std::size_t lanes_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

/// Runs fn(lane) on every lane of `pool`, or serially over `lanes` when no pool is given.
inline void for_each_lane(LanePool* pool, std::size_t lanes, const std::function<void(std::size_t)>& fn) {
  if (pool != nullptr) {
    pool->run(fn);
    return;
  }
  for (std::size_t lane = 0; lane < lanes; ++lane) { fn(lane); }
}

} // namespace dtwmatch
