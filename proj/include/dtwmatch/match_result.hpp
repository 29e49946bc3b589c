#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <tuple>

#include "dtwmatch/core_math.hpp"

namespace dtwmatch {

/// Squared DTW distance and 1-based global start position of a subsequence.
/// Ordered lexicographically: smaller distance wins, ties go to the smaller index.
struct MatchResult {
  double distance = kInfinity;
  std::uint64_t index = 0;

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
  friend bool operator<(const MatchResult& a, const MatchResult& b) noexcept {
    return std::tie(a.distance, a.index) < std::tie(b.distance, b.index);
  }
};

[[nodiscard]] inline MatchResult min_match(const MatchResult& a, const MatchResult& b) noexcept {
  return b < a ? b : a;
}

/// Shared best-so-far. Lanes read the threshold without locking (stale reads
/// only weaken pruning); the (distance, index) pair changes under a mutex so
/// the pair is never torn.
class Champion {
public:
  Champion() = default;
  explicit Champion(MatchResult initial) : best_(initial), threshold_(initial.distance) {}

  Champion(const Champion& other) : best_(other.best()), threshold_(other.threshold()) {}
  Champion& operator=(const Champion& other) {
    if (this != &other) { reset(other.best()); }
    return *this;
  }

  [[nodiscard]] double threshold() const noexcept { return threshold_.load(std::memory_order_relaxed); }

  [[nodiscard]] MatchResult best() const {
    std::lock_guard lock(mutex_);
    return best_;
  }

  /// Atomic-min update. Returns true when `candidate` became the new champion.
  bool offer(MatchResult candidate) {
    if (candidate.distance > threshold()) { return false; }
    std::lock_guard lock(mutex_);
    if (!(candidate < best_)) { return false; }
    best_ = candidate;
    threshold_.store(candidate.distance, std::memory_order_relaxed);
    return true;
  }

  void reset(MatchResult value) {
    std::lock_guard lock(mutex_);
    best_ = value;
    threshold_.store(value.distance, std::memory_order_relaxed);
  }

private:
  mutable std::mutex mutex_;
  MatchResult best_{};
  std::atomic<double> threshold_{kInfinity};
};

} // namespace dtwmatch
