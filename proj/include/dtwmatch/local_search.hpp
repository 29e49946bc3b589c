#pragma once

// Single-fragment best-match search. `prepare` builds every layout structure
// once and seeds the best-so-far from a random row; each `improve_round`
// refreshes the similarity map against the current best-so-far, fills one
// candidate batch per lane and evaluates DTW over the batch.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtwmatch/core_math.hpp"
#include "dtwmatch/errors.hpp"
#include "dtwmatch/lane_pool.hpp"
#include "dtwmatch/layout.hpp"
#include "dtwmatch/match_result.hpp"
#include "dtwmatch/random.hpp"

namespace dtwmatch {

struct SearchParams {
  BandRadius radius{};
  std::size_t width = kDefaultWidth;
  std::size_t lanes = 1;
  std::size_t segment = 100;
  std::uint64_t seed = 42;
  double epsilon = kDefaultEpsilon;
  bool early_abandon = true;
  CascadeOrder cascade = kDefaultCascade;
  std::uint64_t memory_budget_bytes = std::uint64_t{4} << 30;
  /// Test hook: rows with this global index get +inf lower bounds and are
  /// never chosen as the seed row, so the search cannot find them.
  std::optional<std::uint64_t> fault_row;
};

inline void validate(const SearchParams& p) {
  if (p.lanes == 0) { throw config_error("lane count must be at least 1"); }
  if (p.segment == 0) { throw config_error("segment size must be at least 1"); }
  if (!(p.epsilon > 0.0)) { throw config_error("epsilon must be positive"); }
  if (p.width == 0 || !std::has_single_bit(p.width)) {
    throw config_error("vector width must be a power of two, got " + std::to_string(p.width));
  }
  require_permutation(p.cascade);
}

/// Where a fragment sits in the full series.
struct FragmentInfo {
  std::size_t id = 0;
  std::uint64_t global_start = 1;
};

struct RoundReport {
  std::size_t evaluated = 0;
  double bsf = kInfinity;
  bool done = false;
};

class NodeState {
public:
  [[nodiscard]] const FragmentInfo& fragment() const noexcept { return fragment_; }
  [[nodiscard]] const SearchParams& params() const noexcept { return params_; }
  [[nodiscard]] const QueryProfile& query() const noexcept { return query_; }
  [[nodiscard]] const SubsequenceMatrix& matrix() const noexcept { return matrix_; }
  [[nodiscard]] const LowerBoundMatrix& lower_bounds() const noexcept { return lower_bounds_; }
  [[nodiscard]] const SimilarityMap& similarity_map() const noexcept { return map_; }
  [[nodiscard]] const SegmentCursors& cursors() const noexcept { return cursors_; }
  [[nodiscard]] const IndexArray& index_array() const noexcept { return index_; }
  [[nodiscard]] std::size_t segment() const noexcept { return segment_; }

  [[nodiscard]] std::size_t rows() const noexcept { return matrix_.rows(); }
  [[nodiscard]] std::size_t processed() const noexcept { return processed_; }
  [[nodiscard]] bool exhausted() const noexcept { return processed_ == rows(); }
  [[nodiscard]] std::size_t seed_row() const noexcept { return seed_row_; }

  [[nodiscard]] MatchResult best() const { return champion_->best(); }
  [[nodiscard]] double bsf() const { return champion_->best().distance; }

  /// DTW evaluations including the seed row; `abandoned` counts early exits.
  [[nodiscard]] std::size_t dtw_evals() const noexcept { return dtw_evals_; }
  [[nodiscard]] std::size_t dtw_abandoned() const noexcept { return dtw_abandoned_; }
  [[nodiscard]] std::size_t rounds() const noexcept { return rounds_; }

  /// Adopts a best-so-far found elsewhere (another fragment) if it is better.
  void adopt(const MatchResult& other) { champion_->offer(other); }

private:
  friend NodeState prepare(std::span<const double>, std::span<const double>, const SearchParams&, FragmentInfo);
  friend RoundReport improve_round(NodeState&);

  FragmentInfo fragment_{};
  SearchParams params_{};
  QueryProfile query_{};
  SubsequenceMatrix matrix_{};
  LowerBoundMatrix lower_bounds_{};
  SimilarityMap map_{};
  SegmentCursors cursors_{};
  IndexArray index_{};
  CandidateBatch batch_{};
  std::size_t segment_ = 0;
  std::unique_ptr<LanePool> pool_;
  std::unique_ptr<Champion> champion_ = std::make_unique<Champion>();
  std::size_t seed_row_ = 0;
  std::size_t processed_ = 0;
  std::size_t dtw_evals_ = 0;
  std::size_t dtw_abandoned_ = 0;
  std::size_t rounds_ = 0;
};

[[nodiscard]] inline NodeState prepare(std::span<const double> fragment, std::span<const double> query,
                                       const SearchParams& params, FragmentInfo info = {}) {
  validate(params);
  const std::size_t n = query.size();
  if (n == 0) { throw config_error("query is empty"); }
  if (fragment.size() < n) {
    throw config_error("fragment of length " + std::to_string(fragment.size()) + " is shorter than the query (" +
                       std::to_string(n) + ")");
  }
  const std::size_t rows = fragment.size() - n + 1;
  const std::size_t row_width = n + padding_for(n, params.width);
  const std::size_t segment = std::min(params.segment, (rows + params.lanes - 1) / params.lanes);
  const auto footprint = layout_footprint_bytes(rows, n, row_width, params.lanes, segment);
  if (footprint > params.memory_budget_bytes) {
    throw memory_budget_error("fragment working set of " + std::to_string(footprint >> 20) +
                              " MiB exceeds the memory budget of " + std::to_string(params.memory_budget_bytes >> 20) +
                              " MiB; raise the fragment count or the budget");
  }

  NodeState st;
  st.fragment_ = info;
  st.params_ = params;
  st.segment_ = segment;
  st.pool_ = std::make_unique<LanePool>(params.lanes);
  LanePool* pool = st.pool_.get();

  st.query_ = make_query_profile(query, params.radius, params.width, params.epsilon);
  st.matrix_ = build_subsequence_matrix(fragment, n, params.width, params.epsilon, pool);
  st.lower_bounds_ = build_lb_matrix(st.matrix_, st.query_, params.cascade, pool);
  st.index_ = make_index_array(rows, info.global_start);
  st.map_.passes.assign(rows, 0);
  st.cursors_ = SegmentCursors::contiguous(rows, params.lanes);
  st.batch_ = CandidateBatch(params.lanes, segment, row_width, params.width);

  std::optional<std::size_t> fault_local;
  if (params.fault_row && *params.fault_row >= info.global_start && *params.fault_row < info.global_start + rows) {
    fault_local = static_cast<std::size_t>(*params.fault_row - info.global_start);
    for (std::size_t j = 0; j < LowerBoundMatrix::kColumns; ++j) { st.lower_bounds_.at(*fault_local, j) = kInfinity; }
  }

  auto rng = make_rng(params.seed, streams::seed_row_base + info.id);
  st.seed_row_ = static_cast<std::size_t>(uniform_below(rng, rows));
  if (fault_local && st.seed_row_ == *fault_local && rows > 1) { st.seed_row_ = (st.seed_row_ + 1) % rows; }

  const auto seed_dist = dtw_banded(st.matrix_.logical_row(st.seed_row_), st.query_.query.logical(),
                                    params.radius.cells, kInfinity, false);
  st.champion_->reset(MatchResult{*seed_dist, st.index_[st.seed_row_]});
  st.dtw_evals_ = 1;
  return st;
}

[[nodiscard]] inline RoundReport improve_round(NodeState& st) {
  LanePool* pool = st.pool_.get();
  const std::size_t lanes = st.cursors_.lanes();
  const MatchResult snapshot = st.champion_->best();
  const std::size_t n = st.query_.length();

  std::vector<std::size_t> scanned(lanes, 0);
  pool->run([&](std::size_t lane) {
    refresh_similarity_range(st.lower_bounds_, snapshot, st.index_, st.map_, st.cursors_.cursor[lane],
                             st.cursors_.end[lane]);
    scanned[lane] = fill_lane(st.matrix_, st.map_, st.cursors_, st.index_, st.batch_, lane);
  });
  for (auto v : scanned) { st.processed_ += v; }
  ++st.rounds_;

  RoundReport report;
  if (st.batch_.empty()) {
    report.bsf = st.champion_->best().distance;
    report.done = true;
    return report;
  }

  std::vector<std::size_t> abandoned(lanes, 0);
  const auto query = st.query_.query.logical();
  const std::size_t radius = st.params_.radius.cells;
  const bool early = st.params_.early_abandon;
  Champion& champion = *st.champion_;
  CandidateBatch& batch = st.batch_;
  pool->run([&](std::size_t lane) {
    for (std::size_t k = 0; k < batch.lane_fill(lane); ++k) {
      const std::size_t slot = batch.slot(lane, k);
      const auto row = batch.row(slot).first(n);
      const auto d = dtw_banded(row, query, radius, early ? champion.threshold() : kInfinity, early);
      if (d) {
        champion.offer(MatchResult{*d, batch.global_index(slot)});
      } else {
        ++abandoned[lane];
      }
      batch.mark_done(slot);
    }
  });

  report.evaluated = batch.size();
  st.dtw_evals_ += report.evaluated;
  for (auto v : abandoned) { st.dtw_abandoned_ += v; }
  report.bsf = champion.best().distance;
  return report;
}

struct SearchOutcome {
  MatchResult best;
  std::size_t rows = 0;
  std::size_t dtw_evals = 0;
  std::size_t dtw_abandoned = 0;
  std::size_t rounds = 0;

  /// Fraction of rows never handed to DTW.
  [[nodiscard]] double pruning_ratio() const noexcept {
    return rows == 0 ? 0.0 : 1.0 - static_cast<double>(dtw_evals) / static_cast<double>(rows);
  }
};

[[nodiscard]] inline SearchOutcome summarize(const NodeState& st) {
  return SearchOutcome{st.best(), st.rows(), st.dtw_evals(), st.dtw_abandoned(), st.rounds()};
}

/// Runs improve rounds on one fragment until it is exhausted.
[[nodiscard]] inline SearchOutcome run_local_search(std::span<const double> fragment, std::span<const double> query,
                                                    const SearchParams& params, FragmentInfo info = {}) {
  auto st = prepare(fragment, query, params, info);
  while (!improve_round(st).done) {}
  return summarize(st);
}

[[nodiscard]] inline MatchResult local_best_match(std::span<const double> fragment, std::span<const double> query,
                                                  const SearchParams& params, FragmentInfo info = {}) {
  return run_local_search(fragment, query, params, info).best;
}

} // namespace dtwmatch
