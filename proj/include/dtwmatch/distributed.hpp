#pragma once

#include <chrono>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dtwmatch/comms.hpp"
#include "dtwmatch/errors.hpp"
#include "dtwmatch/fragmentation.hpp"
#include "dtwmatch/local_search.hpp"
#include "dtwmatch/tcp_transport.hpp"

namespace dtwmatch {

enum class Transport { in_process, tcp };

[[nodiscard]] inline const char* to_string(Transport t) noexcept {
  return t == Transport::tcp ? "tcp" : "inproc";
}

struct DistributedOptions {
  std::size_t fragments = 1;
  Transport transport = Transport::in_process;
  std::chrono::milliseconds timeout = kDefaultRoundTimeout;
  /// Improve rounds run between two reductions.
  std::size_t rounds_per_reduction = 1;
};

struct WorkerReport {
  std::size_t worker = 0;
  MatchResult final;
  SearchOutcome local;
  std::size_t reductions = 0;     // reduction rounds joined (pair + flag)
  std::size_t active_rounds = 0;  // improve rounds actually run
  std::vector<double> reduced_bsf;
};

/// One worker of the search: prepare, then alternate improve rounds with the
/// two reductions until every worker reports its fragment done. A worker that
/// finishes early keeps joining reductions with done = true and its frozen best.
[[nodiscard]] inline WorkerReport run_worker(std::span<const double> fragment, FragmentInfo info,
                                             std::span<const double> query, const SearchParams& params,
                                             Reducer& reducer, std::size_t rounds_per_reduction = 1) {
  if (rounds_per_reduction == 0) { throw config_error("rounds per reduction must be at least 1"); }
  auto st = prepare(fragment, query, params, info);
  WorkerReport report;
  report.worker = info.id;
  for (;;) {
    for (std::size_t k = 0; k < rounds_per_reduction && !st.exhausted(); ++k) {
      (void)improve_round(st);
      ++report.active_rounds;
    }
    const bool done = st.exhausted();
    const MatchResult reduced = reducer.allreduce_min_pair(st.best());
    st.adopt(reduced);
    report.reduced_bsf.push_back(reduced.distance);
    const bool stop = reducer.allreduce_and(done);
    ++report.reductions;
    if (stop) { break; }
  }
  report.final = st.best();
  report.local = summarize(st);
  return report;
}

struct DistributedOutcome {
  MatchResult best;
  std::vector<WorkerReport> workers;
  FragmentPlan plan;

  [[nodiscard]] std::size_t rows() const noexcept {
    std::size_t total = 0;
    for (const auto& w : workers) { total += w.local.rows; }
    return total;
  }
  [[nodiscard]] std::size_t dtw_evals() const noexcept {
    std::size_t total = 0;
    for (const auto& w : workers) { total += w.local.dtw_evals; }
    return total;
  }
  [[nodiscard]] std::size_t dtw_abandoned() const noexcept {
    std::size_t total = 0;
    for (const auto& w : workers) { total += w.local.dtw_abandoned; }
    return total;
  }
  [[nodiscard]] double pruning_ratio() const noexcept {
    const auto r = rows();
    return r == 0 ? 0.0 : 1.0 - static_cast<double>(dtw_evals()) / static_cast<double>(r);
  }
};

namespace detail {

/// First non-transport error wins: a transport error in one worker is usually
/// the echo of a real failure in another.
class ErrorSlot {
public:
  void record(std::exception_ptr e) {
    std::lock_guard lock(mutex_);
    bool is_transport = false;
    try {
      std::rethrow_exception(e);
    } catch (const transport_error&) {
      is_transport = true;
    } catch (...) {
    }
    if (!first_ || (first_is_transport_ && !is_transport)) {
      first_ = e;
      first_is_transport_ = is_transport;
    }
  }
  void rethrow_if_any() const {
    if (first_) { std::rethrow_exception(first_); }
  }

private:
  std::mutex mutex_;
  std::exception_ptr first_;
  bool first_is_transport_ = false;
};

} // namespace detail

/// Partitions the series into `options.fragments` overlapping fragments and
/// runs one worker per fragment over the chosen transport. The tcp transport
/// runs a loopback coordinator in this process.
[[nodiscard]] inline DistributedOutcome run_distributed(std::span<const double> series, std::span<const double> query,
                                                        const SearchParams& params, const DistributedOptions& options) {
  validate(params);
  if (options.rounds_per_reduction == 0) { throw config_error("rounds per reduction must be at least 1"); }
  DistributedOutcome outcome;
  outcome.plan = partition_overlap(series.size(), query.size(), options.fragments);
  const std::size_t f = outcome.plan.size();
  outcome.workers.resize(f);
  detail::ErrorSlot errors;

  auto fragment_of = [&](std::size_t k) {
    const auto& frag = outcome.plan[k];
    return series.subspan(static_cast<std::size_t>(frag.start - 1), static_cast<std::size_t>(frag.length));
  };

  std::vector<std::thread> threads;
  threads.reserve(f + 1);

  if (options.transport == Transport::in_process) {
    InProcessGroup group(f, options.timeout);
    for (std::size_t k = 0; k < f; ++k) {
      threads.emplace_back([&, k] {
        try {
          auto reducer = group.endpoint(k);
          outcome.workers[k] = run_worker(fragment_of(k), FragmentInfo{k, outcome.plan[k].start}, query, params,
                                          *reducer, options.rounds_per_reduction);
        } catch (...) {
          errors.record(std::current_exception());
          group.abort("worker " + std::to_string(k) + " failed");
        }
      });
    }
    for (auto& t : threads) { t.join(); }
  } else {
    tcp::Coordinator coordinator(tcp::Endpoint{"127.0.0.1", 0}, f, options.timeout);
    const tcp::Endpoint address{"127.0.0.1", coordinator.port()};
    std::optional<MatchResult> coordinated;
    threads.emplace_back([&] {
      try {
        coordinated = coordinator.serve();
      } catch (...) {
        errors.record(std::current_exception());
      }
    });
    for (std::size_t k = 0; k < f; ++k) {
      threads.emplace_back([&, k] {
        std::unique_ptr<tcp::TcpReducer> reducer;
        try {
          reducer = std::make_unique<tcp::TcpReducer>(address, options.timeout);
          outcome.workers[k] = run_worker(fragment_of(k), FragmentInfo{k, outcome.plan[k].start}, query, params,
                                          *reducer, options.rounds_per_reduction);
        } catch (...) {
          errors.record(std::current_exception());
          if (reducer) { reducer->close(); }
        }
      });
    }
    for (auto& t : threads) { t.join(); }
    errors.rethrow_if_any();
    if (!coordinated || !(*coordinated == outcome.workers.front().final)) {
      throw transport_error("coordinator result disagrees with the workers");
    }
  }
  errors.rethrow_if_any();

  outcome.best = outcome.workers.front().final;
  for (const auto& w : outcome.workers) {
    if (!(w.final == outcome.best)) { throw std::logic_error("workers finished with different results"); }
  }
  return outcome;
}

} // namespace dtwmatch
