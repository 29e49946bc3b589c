#pragma once

// Coordination contract between fragment workers: once per round every
// worker calls allreduce_min_pair and then allreduce_and. Both calls have
// barrier semantics and every worker receives the same reduced value.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dtwmatch/errors.hpp"
#include "dtwmatch/match_result.hpp"

namespace dtwmatch {

inline constexpr std::chrono::milliseconds kDefaultRoundTimeout{30'000};

class Reducer {
public:
  virtual ~Reducer() = default;
  /// Lexicographic minimum of (distance, index) over all workers.
  virtual MatchResult allreduce_min_pair(MatchResult contribution) = 0;
  /// Conjunction of all workers' flags.
  virtual bool allreduce_and(bool flag) = 0;
};

/// Workers running as threads of one process. A shared slot collects one
/// contribution per worker; the last arrival computes the reduction and
/// releases the others.
class InProcessGroup {
public:
  explicit InProcessGroup(std::size_t workers, std::chrono::milliseconds timeout = kDefaultRoundTimeout)
      : workers_(workers), timeout_(timeout), pairs_(workers), flags_(workers, 0) {
    if (workers == 0) { throw config_error("in-process group needs at least one worker"); }
  }

  InProcessGroup(const InProcessGroup&) = delete;
  InProcessGroup& operator=(const InProcessGroup&) = delete;

  [[nodiscard]] std::size_t size() const noexcept { return workers_; }

  /// Wakes every blocked worker with a transport_error; later calls fail too.
  void abort(const std::string& reason) {
    {
      std::lock_guard lock(mutex_);
      if (broken_) { return; }
      broken_ = true;
      reason_ = reason;
    }
    cv_.notify_all();
  }

  [[nodiscard]] std::unique_ptr<Reducer> endpoint(std::size_t worker_id);

  MatchResult reduce_pair(std::size_t worker, MatchResult value) {
    return exchange<MatchResult>(worker, [&] { pairs_[worker] = value; },
                                 [&] {
                                   MatchResult r = pairs_[0];
                                   for (std::size_t i = 1; i < workers_; ++i) { r = min_match(r, pairs_[i]); }
                                   pair_result_ = r;
                                 },
                                 [&] { return pair_result_; });
  }

  bool reduce_flag(std::size_t worker, bool value) {
    return exchange<bool>(worker, [&] { flags_[worker] = value ? 1 : 0; },
                          [&] {
                            bool r = true;
                            for (auto f : flags_) { r = r && f != 0; }
                            flag_result_ = r;
                          },
                          [&] { return flag_result_; });
  }

private:
  template <class T, class Store, class Combine, class Read>
  T exchange(std::size_t worker, Store store, Combine combine, Read read) {
    std::unique_lock lock(mutex_);
    if (broken_) { throw transport_error("reduction aborted: " + reason_); }
    if (worker >= workers_) { throw transport_error("worker id " + std::to_string(worker) + " out of range"); }
    store();
    const std::size_t generation = generation_;
    if (++arrived_ == workers_) {
      combine();
      arrived_ = 0;
      ++generation_;
      cv_.notify_all();
      return read();
    }
    if (!cv_.wait_for(lock, timeout_, [&] { return generation_ != generation || broken_; })) {
      broken_ = true;
      reason_ = "round timed out after " + std::to_string(timeout_.count()) + " ms";
      cv_.notify_all();
    }
    if (generation_ == generation) { throw transport_error("reduction aborted: " + reason_); }
    return read();
  }

  std::size_t workers_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t arrived_ = 0;
  std::size_t generation_ = 0;
  bool broken_ = false;
  std::string reason_;
  std::vector<MatchResult> pairs_;
  std::vector<char> flags_;
  MatchResult pair_result_{};
  bool flag_result_ = false;
};

class InProcessReducer final : public Reducer {
public:
  InProcessReducer(InProcessGroup& group, std::size_t worker) : group_(group), worker_(worker) {}
  MatchResult allreduce_min_pair(MatchResult contribution) override { return group_.reduce_pair(worker_, contribution); }
  bool allreduce_and(bool flag) override { return group_.reduce_flag(worker_, flag); }

private:
  InProcessGroup& group_;
  std::size_t worker_;
};

inline std::unique_ptr<Reducer> InProcessGroup::endpoint(std::size_t worker_id) {
  if (worker_id >= workers_) { throw config_error("worker id " + std::to_string(worker_id) + " out of range"); }
  return std::make_unique<InProcessReducer>(*this, worker_id);
}

} // namespace dtwmatch
