#pragma once

// Scalar kernels shared by every search path: z-normalization, squared
// Euclidean distance, query/candidate envelopes, the three lower bounds and
// Sakoe-Chiba banded DTW with early abandoning.
//
// All distances are squared (no square roots anywhere). Kernels come in two
// flavours: span-based (used on matrix rows, no allocation beyond scratch)
// and NormalizedSeq-based (validated, used by the public API and tests).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtwmatch {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultEpsilon = 1e-12;
inline constexpr std::size_t kDefaultWidth = 8;

/// Number of trailing zeros needed to round `n` up to a multiple of `width`.
[[nodiscard]] constexpr std::size_t padding_for(std::size_t n, std::size_t width) noexcept {
  return width == 0 ? 0 : (width - n % width) % width;
}

/// A z-normalized sequence of logical length `length`, zero padded to a
/// multiple of the vector width.
struct NormalizedSeq {
  std::vector<double> values;
  std::size_t length = 0;

  [[nodiscard]] std::span<const double> logical() const noexcept { return {values.data(), length}; }
  [[nodiscard]] std::size_t padded_length() const noexcept { return values.size(); }
};

/// Upper/lower envelope; same padded shape as the sequence it was built from.
struct Envelope {
  std::vector<double> upper;
  std::vector<double> lower;
};

/// Sakoe-Chiba band radius in cells. Any radius >= n-1 is unconstrained.
struct BandRadius {
  std::size_t cells = 0;

  [[nodiscard]] std::size_t effective(std::size_t n) const noexcept {
    return n == 0 ? 0 : std::min(cells, n - 1);
  }
};

// ---------------------------------------------------------------------------
// Normalization

/// Writes (raw[i] - mean) / stddev into `out` (same length as raw). Population
/// statistics. The deviations from the first mean estimate are re-centred by
/// their own mean, which removes the rounding error of that estimate; this
/// matters when the offset dwarfs the spread. Constant input (stddev <
/// epsilon) yields zeros.
inline void znormalize_into(std::span<const double> raw, std::span<double> out, double epsilon) {
  const auto n = raw.size();
  double sum = 0.0;
  for (double v : raw) { sum += v; }
  const double mean = sum / static_cast<double>(n);
  double residual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = raw[i] - mean;
    residual += out[i];
  }
  const double shift = residual / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] -= shift;
    sq += out[i] * out[i];
  }
  const double stddev = std::sqrt(sq / static_cast<double>(n));
  if (!(stddev >= epsilon)) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) { out[i] /= stddev; }
}

[[nodiscard]] inline NormalizedSeq znormalize(std::span<const double> raw,
                                              double epsilon = kDefaultEpsilon,
                                              std::size_t width = kDefaultWidth) {
  if (raw.empty()) { throw std::invalid_argument("znormalize: empty input"); }
  if (!(epsilon > 0.0)) { throw std::invalid_argument("znormalize: epsilon must be positive"); }
  if (width == 0) { throw std::invalid_argument("znormalize: width must be positive"); }
  NormalizedSeq out;
  out.length = raw.size();
  out.values.assign(raw.size() + padding_for(raw.size(), width), 0.0);
  znormalize_into(raw, out.values, epsilon);
  return out;
}

// ---------------------------------------------------------------------------
// Envelope

/// Sliding-window max/min over [i-r, i+r] clipped to [0, n). Monotonic deque,
/// linear time. `upper` and `lower` must hold at least series.size() values.
inline void envelope_into(std::span<const double> series, std::size_t radius,
                          std::span<double> upper, std::span<double> lower) {
  const std::size_t n = series.size();
  if (n == 0) { return; }
  radius = std::min(radius, n - 1);
  // Index deques stored in fixed buffers; at most n entries are ever pushed.
  thread_local std::vector<std::size_t> maxq, minq;
  maxq.resize(n);
  minq.resize(n);
  std::size_t max_head = 0, max_tail = 0, min_head = 0, min_tail = 0;

  for (std::size_t j = 0; j < n + radius; ++j) {
    if (j < n) {
      const double v = series[j];
      while (max_tail > max_head && series[maxq[max_tail - 1]] <= v) { --max_tail; }
      maxq[max_tail++] = j;
      while (min_tail > min_head && series[minq[min_tail - 1]] >= v) { --min_tail; }
      minq[min_tail++] = j;
    }
    if (j < radius) { continue; }
    const std::size_t i = j - radius;
    const std::size_t lo = i >= radius ? i - radius : 0;
    while (maxq[max_head] < lo) { ++max_head; }
    while (minq[min_head] < lo) { ++min_head; }
    upper[i] = series[maxq[max_head]];
    lower[i] = series[minq[min_head]];
  }
}

[[nodiscard]] inline Envelope compute_envelope(const NormalizedSeq& q, BandRadius r) {
  Envelope env;
  env.upper.assign(q.padded_length(), 0.0);
  env.lower.assign(q.padded_length(), 0.0);
  envelope_into(q.logical(), r.cells, env.upper, env.lower);
  return env;
}

// ---------------------------------------------------------------------------
// Distances and lower bounds (span kernels; callers guarantee equal lengths)

[[nodiscard]] inline double squared_euclid(std::span<const double> a, std::span<const double> b) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

/// First and last point squared distances. For n == 1 both points coincide
/// and the single term is returned, otherwise the bound would exceed DTW.
[[nodiscard]] inline double lb_kim_fl(std::span<const double> q, std::span<const double> c) noexcept {
  const std::size_t n = q.size();
  if (n == 0) { return 0.0; }
  const double first = (q[0] - c[0]) * (q[0] - c[0]);
  if (n == 1) { return first; }
  const double last = (q[n - 1] - c[n - 1]) * (q[n - 1] - c[n - 1]);
  return first + last;
}

/// Sum of squared excursions of `series` outside [lower, upper].
[[nodiscard]] inline double lb_keogh(std::span<const double> series, std::span<const double> upper,
                                     std::span<const double> lower) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double v = series[i];
    if (v > upper[i]) {
      const double d = v - upper[i];
      sum += d * d;
    } else if (v < lower[i]) {
      const double d = v - lower[i];
      sum += d * d;
    }
  }
  return sum;
}

/// Squared DTW restricted to |i - j| <= radius, computed over two rolling
/// band rows of width 2r+1. Returns nullopt (pruned) only when every cell of
/// some completed row exceeds `threshold`, which proves the result would too.
[[nodiscard]] inline std::optional<double> dtw_banded(std::span<const double> x, std::span<const double> y,
                                                      std::size_t radius, double threshold = kInfinity,
                                                      bool early_abandon = true) {
  const std::size_t n = x.size();
  if (n == 0) { return 0.0; }
  const std::size_t r = std::min(radius, n - 1);
  const std::size_t band = 2 * r + 1;

  // Cell (i, j) lives at slot j - i + r of row i.
  thread_local std::vector<double> buffer;
  buffer.assign(2 * band, kInfinity);
  double* prev = buffer.data();
  double* curr = buffer.data() + band;

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j_lo = i >= r ? i - r : 0;
    const std::size_t j_hi = std::min(n - 1, i + r);
    double row_min = kInfinity;
    for (std::size_t j = j_lo; j <= j_hi; ++j) {
      const std::size_t k = j + r - i;
      const double diff = x[i] - y[j];
      const double cost = diff * diff;
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        const double up = k + 1 < band ? prev[k + 1] : kInfinity;  // (i-1, j)
        const double diag = prev[k];                                // (i-1, j-1)
        const double left = k > 0 ? curr[k - 1] : kInfinity;        // (i, j-1)
        best = std::min({up, diag, left});
      }
      curr[k] = cost + best;
      row_min = std::min(row_min, curr[k]);
    }
    if (early_abandon && row_min > threshold) { return std::nullopt; }
    std::swap(prev, curr);
    std::fill(curr, curr + band, kInfinity);
  }
  // After the final swap the last row sits in `prev`; cell (n-1, n-1) is slot r.
  return prev[r];
}

// ---------------------------------------------------------------------------
// Validated NormalizedSeq overloads

namespace detail {
inline void require_same_length(const NormalizedSeq& a, const NormalizedSeq& b, const char* what) {
  if (a.length != b.length) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.length) +
                                " vs " + std::to_string(b.length) + ")");
  }
}
inline void require_envelope_shape(const NormalizedSeq& s, const Envelope& env, const char* what) {
  if (env.upper.size() < s.length || env.lower.size() < s.length || env.upper.size() != env.lower.size()) {
    throw std::invalid_argument(std::string(what) + ": envelope shape mismatch");
  }
}
} // namespace detail

[[nodiscard]] inline double squared_euclid(const NormalizedSeq& a, const NormalizedSeq& b) {
  detail::require_same_length(a, b, "squared_euclid");
  return squared_euclid(a.logical(), b.logical());
}

[[nodiscard]] inline double lb_kim_fl(const NormalizedSeq& q, const NormalizedSeq& c) {
  detail::require_same_length(q, c, "lb_kim_fl");
  return lb_kim_fl(q.logical(), c.logical());
}

/// Candidate against the query envelope.
[[nodiscard]] inline double lb_keogh_ec(const NormalizedSeq& c, const Envelope& query_envelope) {
  detail::require_envelope_shape(c, query_envelope, "lb_keogh_ec");
  return lb_keogh(c.logical(), query_envelope.upper, query_envelope.lower);
}

/// Query against the candidate envelope.
[[nodiscard]] inline double lb_keogh_eq(const NormalizedSeq& q, const Envelope& candidate_envelope) {
  detail::require_envelope_shape(q, candidate_envelope, "lb_keogh_eq");
  return lb_keogh(q.logical(), candidate_envelope.upper, candidate_envelope.lower);
}

[[nodiscard]] inline std::optional<double> dtw_banded(const NormalizedSeq& q, const NormalizedSeq& c, BandRadius r,
                                                      double threshold = kInfinity, bool early_abandon = true) {
  detail::require_same_length(q, c, "dtw_banded");
  return dtw_banded(q.logical(), c.logical(), r.cells, threshold, early_abandon);
}

} // namespace dtwmatch
