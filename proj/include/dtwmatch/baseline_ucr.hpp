#pragma once

// Sequential reference scans. Both are single-threaded and normalize every
// window with the same routine as the matrix layout, so all search paths see
// bit-identical candidates and distances.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dtwmatch/core_math.hpp"
#include "dtwmatch/errors.hpp"
#include "dtwmatch/layout.hpp"
#include "dtwmatch/match_result.hpp"

namespace dtwmatch {

struct ScanStats {
  /// Candidates rejected by cascade stage j (in cascade order).
  std::array<std::size_t, 3> rejected{0, 0, 0};
  /// How many times stage j was evaluated at all.
  std::array<std::size_t, 3> computed{0, 0, 0};
  std::size_t dtw_evals = 0;
  std::size_t dtw_abandoned = 0;
  std::size_t candidates = 0;
  double wall_ms = 0.0;

  [[nodiscard]] double pruning_ratio() const noexcept {
    return candidates == 0 ? 0.0 : 1.0 - static_cast<double>(dtw_evals) / static_cast<double>(candidates);
  }
};

struct UcrOptions {
  double epsilon = kDefaultEpsilon;
  bool early_abandon = true;
  CascadeOrder cascade = kDefaultCascade;
};

struct UcrResult {
  MatchResult best;
  ScanStats stats;
};

namespace detail {
inline void require_scannable(std::size_t m, std::size_t n) {
  if (n == 0) { throw config_error("query is empty"); }
  if (m < n) {
    throw config_error("series of length " + std::to_string(m) + " is shorter than the query (" + std::to_string(n) +
                       ")");
  }
}
} // namespace detail

/// Left-to-right scan with a lazily evaluated lower-bound cascade: stage j+1
/// is computed only for candidates stage j did not reject. A candidate is
/// rejected when its bound exceeds the best-so-far, which starts at +inf. The
/// candidate envelope for keogh_eq is recomputed per candidate.
[[nodiscard]] inline UcrResult ucr_dtw_search(std::span<const double> series, std::span<const double> query,
                                              BandRadius r, const UcrOptions& options = {}) {
  detail::require_scannable(series.size(), query.size());
  require_permutation(options.cascade);
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = query.size();
  const QueryProfile q = make_query_profile(query, r, 1, options.epsilon);

  UcrResult out;
  ScanStats& stats = out.stats;
  stats.candidates = series.size() - n + 1;
  std::vector<double> cand(n), upper(n), lower(n);

  for (std::size_t i = 0; i < stats.candidates; ++i) {
    znormalize_into(series.subspan(i, n), cand, options.epsilon);
    const double bsf = out.best.distance;
    bool rejected = false;
    for (std::size_t stage = 0; stage < 3 && !rejected; ++stage) {
      const LowerBound kind = options.cascade[stage];
      if (kind == LowerBound::keogh_eq) { envelope_into(cand, r.cells, upper, lower); }
      ++stats.computed[stage];
      if (lower_bound_value(kind, cand, upper, lower, q) > bsf) {
        ++stats.rejected[stage];
        rejected = true;
      }
    }
    if (rejected) { continue; }
    ++stats.dtw_evals;
    const auto d = dtw_banded(std::span<const double>(cand), q.query.logical(), r.cells, bsf, options.early_abandon);
    if (!d) {
      ++stats.dtw_abandoned;
      continue;
    }
    const MatchResult here{*d, static_cast<std::uint64_t>(i + 1)};
    if (here < out.best) { out.best = here; }
  }
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return out;
}

/// Exact banded DTW for every subsequence, no pruning, smallest index on ties.
[[nodiscard]] inline MatchResult brute_force_search(std::span<const double> series, std::span<const double> query,
                                                    BandRadius r, double epsilon = kDefaultEpsilon) {
  detail::require_scannable(series.size(), query.size());
  const std::size_t n = query.size();
  const NormalizedSeq q = znormalize(query, epsilon, 1);
  std::vector<double> cand(n);
  MatchResult best;
  for (std::size_t i = 0; i + n <= series.size(); ++i) {
    znormalize_into(series.subspan(i, n), cand, epsilon);
    const double d = *dtw_banded(std::span<const double>(cand), q.logical(), r.cells, kInfinity, false);
    const MatchResult here{d, static_cast<std::uint64_t>(i + 1)};
    if (here < best) { best = here; }
  }
  return best;
}

} // namespace dtwmatch
