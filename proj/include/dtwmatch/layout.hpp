#pragma once

// Padded, matrix-shaped per-fragment data: the subsequence matrix, row
// envelopes, the lower-bound matrix, the similarity map, segment cursors,
// the index array and candidate batches.
//
// Rows are stored with a stride that is a multiple of the vector width `w`
// and the storage base is aligned to w doubles, so every row starts on an
// aligned address.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "dtwmatch/core_math.hpp"
#include "dtwmatch/lane_pool.hpp"
#include "dtwmatch/match_result.hpp"

namespace dtwmatch {

namespace detail {
struct AlignedDeleter {
  std::size_t alignment = alignof(double);
  void operator()(double* p) const noexcept { ::operator delete(p, std::align_val_t(alignment)); }
};
} // namespace detail

/// Uninitialized, over-aligned array of doubles.
class AlignedBuffer {
public:
  AlignedBuffer() = default;
  AlignedBuffer(std::size_t count, std::size_t alignment_bytes)
      : size_(count), alignment_(std::max(alignment_bytes, alignof(double))) {
    if (count > 0) {
      data_.reset(static_cast<double*>(::operator new(count * sizeof(double), std::align_val_t(alignment_))));
      data_.get_deleter().alignment = alignment_;
    }
  }

  [[nodiscard]] double* data() noexcept { return data_.get(); }
  [[nodiscard]] const double* data() const noexcept { return data_.get(); }
  [[nodiscard]] std::size_t size() const noexcept { return size_; }
  [[nodiscard]] std::size_t alignment() const noexcept { return alignment_; }

private:
  std::unique_ptr<double, detail::AlignedDeleter> data_;
  std::size_t size_ = 0;
  std::size_t alignment_ = alignof(double);
};

inline void require_valid_width(std::size_t width) {
  if (width == 0 || !std::has_single_bit(width)) {
    throw std::invalid_argument("vector width must be a power of two, got " + std::to_string(width));
  }
}

// ---------------------------------------------------------------------------

/// Normalized, padded query with its envelope for a fixed band radius.
struct QueryProfile {
  NormalizedSeq query;
  Envelope envelope;
  BandRadius radius;

  [[nodiscard]] std::size_t length() const noexcept { return query.length; }
};

[[nodiscard]] inline QueryProfile make_query_profile(std::span<const double> raw, BandRadius radius,
                                                     std::size_t width = kDefaultWidth,
                                                     double epsilon = kDefaultEpsilon) {
  require_valid_width(width);
  QueryProfile profile;
  profile.query = znormalize(raw, epsilon, width);
  profile.envelope = compute_envelope(profile.query, radius);
  profile.radius = radius;
  return profile;
}

// ---------------------------------------------------------------------------

/// N rows; row i is the z-normalized subsequence starting at local position i
/// (0-based here), followed by zero padding up to `row_width`.
class SubsequenceMatrix {
public:
  SubsequenceMatrix() = default;
  SubsequenceMatrix(std::size_t rows, std::size_t length, std::size_t width)
      : rows_(rows), length_(length), width_(width), row_width_(length + padding_for(length, width)),
        data_(rows * row_width_, width * sizeof(double)) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t length() const noexcept { return length_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t row_width() const noexcept { return row_width_; }

  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * row_width_, row_width_};
  }
  [[nodiscard]] std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * row_width_, row_width_}; }
  /// The first `length()` entries of row i.
  [[nodiscard]] std::span<const double> logical_row(std::size_t i) const noexcept {
    return {data_.data() + i * row_width_, length_};
  }
  [[nodiscard]] const double* data() const noexcept { return data_.data(); }

private:
  std::size_t rows_ = 0;
  std::size_t length_ = 0;
  std::size_t width_ = 1;
  std::size_t row_width_ = 0;
  AlignedBuffer data_;
};

[[nodiscard]] inline SubsequenceMatrix build_subsequence_matrix(std::span<const double> fragment, std::size_t n,
                                                                std::size_t width = kDefaultWidth,
                                                                double epsilon = kDefaultEpsilon,
                                                                LanePool* pool = nullptr) {
  require_valid_width(width);
  if (n == 0) { throw std::invalid_argument("build_subsequence_matrix: query length must be positive"); }
  if (fragment.size() < n) {
    throw std::invalid_argument("build_subsequence_matrix: fragment of length " + std::to_string(fragment.size()) +
                                " is shorter than the query length " + std::to_string(n));
  }
  const std::size_t rows = fragment.size() - n + 1;
  SubsequenceMatrix matrix(rows, n, width);
  const std::size_t lanes = pool ? pool->size() : 1;
  for_each_lane(pool, lanes, [&](std::size_t lane) {
    const auto [begin, end] = LanePool::block(rows, lanes, lane);
    for (std::size_t i = begin; i < end; ++i) {
      auto dst = matrix.row(i);
      znormalize_into(fragment.subspan(i, n), dst, epsilon);
      std::fill(dst.begin() + static_cast<std::ptrdiff_t>(n), dst.end(), 0.0);
    }
  });
  return matrix;
}

// ---------------------------------------------------------------------------

/// Per-row envelopes with the same shape as the subsequence matrix.
class RowEnvelopes {
public:
  RowEnvelopes() = default;
  RowEnvelopes(std::size_t rows, std::size_t row_width, std::size_t width)
      : rows_(rows), row_width_(row_width), upper_(rows * row_width, width * sizeof(double)),
        lower_(rows * row_width, width * sizeof(double)) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t row_width() const noexcept { return row_width_; }
  [[nodiscard]] std::span<const double> upper(std::size_t i) const noexcept {
    return {upper_.data() + i * row_width_, row_width_};
  }
  [[nodiscard]] std::span<const double> lower(std::size_t i) const noexcept {
    return {lower_.data() + i * row_width_, row_width_};
  }
  [[nodiscard]] std::span<double> upper(std::size_t i) noexcept { return {upper_.data() + i * row_width_, row_width_}; }
  [[nodiscard]] std::span<double> lower(std::size_t i) noexcept { return {lower_.data() + i * row_width_, row_width_}; }

private:
  std::size_t rows_ = 0;
  std::size_t row_width_ = 0;
  AlignedBuffer upper_;
  AlignedBuffer lower_;
};

[[nodiscard]] inline RowEnvelopes build_row_envelopes(const SubsequenceMatrix& s, BandRadius r,
                                                      LanePool* pool = nullptr) {
  RowEnvelopes envs(s.rows(), s.row_width(), s.width());
  const std::size_t lanes = pool ? pool->size() : 1;
  for_each_lane(pool, lanes, [&](std::size_t lane) {
    const auto [begin, end] = LanePool::block(s.rows(), lanes, lane);
    for (std::size_t i = begin; i < end; ++i) {
      auto up = envs.upper(i);
      auto lo = envs.lower(i);
      envelope_into(s.logical_row(i), r.cells, up, lo);
      std::fill(up.begin() + static_cast<std::ptrdiff_t>(s.length()), up.end(), 0.0);
      std::fill(lo.begin() + static_cast<std::ptrdiff_t>(s.length()), lo.end(), 0.0);
    }
  });
  return envs;
}

// ---------------------------------------------------------------------------

enum class LowerBound : std::uint8_t { kim_fl, keogh_ec, keogh_eq };
using CascadeOrder = std::array<LowerBound, 3>;
inline constexpr CascadeOrder kDefaultCascade{LowerBound::kim_fl, LowerBound::keogh_ec, LowerBound::keogh_eq};

[[nodiscard]] inline const char* to_string(LowerBound lb) noexcept {
  switch (lb) {
    case LowerBound::kim_fl: return "kim_fl";
    case LowerBound::keogh_ec: return "keogh_ec";
    case LowerBound::keogh_eq: return "keogh_eq";
  }
  return "?";
}

/// Throws unless `order` is a permutation of the three bounds.
inline void require_permutation(const CascadeOrder& order) {
  bool seen[3] = {false, false, false};
  for (auto lb : order) {
    const auto k = static_cast<std::size_t>(lb);
    if (k > 2 || seen[k]) { throw std::invalid_argument("cascade order must be a permutation of kim_fl, keogh_ec, keogh_eq"); }
    seen[k] = true;
  }
}

/// One lower bound of a candidate row against the query. `row_upper` and
/// `row_lower` (the row's own envelope) are only read for keogh_eq.
[[nodiscard]] inline double lower_bound_value(LowerBound kind, std::span<const double> row,
                                              std::span<const double> row_upper, std::span<const double> row_lower,
                                              const QueryProfile& q) noexcept {
  switch (kind) {
    case LowerBound::kim_fl: return lb_kim_fl(row, q.query.logical());
    case LowerBound::keogh_ec: return lb_keogh(row, q.envelope.upper, q.envelope.lower);
    case LowerBound::keogh_eq: return lb_keogh(q.query.logical(), row_upper, row_lower);
  }
  return 0.0;
}

class LowerBoundMatrix {
public:
  static constexpr std::size_t kColumns = 3;

  LowerBoundMatrix() = default;
  LowerBoundMatrix(std::size_t rows, CascadeOrder order) : rows_(rows), order_(order), data_(rows * kColumns, 0.0) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] const CascadeOrder& order() const noexcept { return order_; }
  [[nodiscard]] double at(std::size_t i, std::size_t column) const noexcept { return data_[i * kColumns + column]; }
  [[nodiscard]] double& at(std::size_t i, std::size_t column) noexcept { return data_[i * kColumns + column]; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * kColumns, kColumns}; }

private:
  std::size_t rows_ = 0;
  CascadeOrder order_ = kDefaultCascade;
  std::vector<double> data_;
};

inline void require_matching_query(const SubsequenceMatrix& s, const QueryProfile& q) {
  if (s.length() != q.length()) {
    throw std::invalid_argument("lower-bound matrix: subsequence length " + std::to_string(s.length()) +
                                " does not match query length " + std::to_string(q.length()));
  }
}

/// Lower bounds from precomputed row envelopes.
[[nodiscard]] inline LowerBoundMatrix build_lb_matrix(const SubsequenceMatrix& s, const RowEnvelopes& envs,
                                                      const QueryProfile& q, CascadeOrder order = kDefaultCascade,
                                                      LanePool* pool = nullptr) {
  require_matching_query(s, q);
  require_permutation(order);
  if (envs.rows() != s.rows() || envs.row_width() != s.row_width()) {
    throw std::invalid_argument("lower-bound matrix: envelope table shape mismatch");
  }
  LowerBoundMatrix lbm(s.rows(), order);
  const std::size_t lanes = pool ? pool->size() : 1;
  for_each_lane(pool, lanes, [&](std::size_t lane) {
    const auto [begin, end] = LanePool::block(s.rows(), lanes, lane);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < LowerBoundMatrix::kColumns; ++j) {
        lbm.at(i, j) = lower_bound_value(order[j], s.logical_row(i), envs.upper(i), envs.lower(i), q);
      }
    }
  });
  return lbm;
}

/// Same values as the envelope-table overload, but each row envelope lives
/// only in a per-lane scratch buffer, so the N x row_width envelope table is
/// never materialized.
[[nodiscard]] inline LowerBoundMatrix build_lb_matrix(const SubsequenceMatrix& s, const QueryProfile& q,
                                                      CascadeOrder order = kDefaultCascade,
                                                      LanePool* pool = nullptr) {
  require_matching_query(s, q);
  require_permutation(order);
  LowerBoundMatrix lbm(s.rows(), order);
  const std::size_t lanes = pool ? pool->size() : 1;
  for_each_lane(pool, lanes, [&](std::size_t lane) {
    const auto [begin, end] = LanePool::block(s.rows(), lanes, lane);
    std::vector<double> upper(s.length()), lower(s.length());
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = s.logical_row(i);
      envelope_into(row, q.radius.cells, upper, lower);
      for (std::size_t j = 0; j < LowerBoundMatrix::kColumns; ++j) {
        lbm.at(i, j) = lower_bound_value(order[j], row, upper, lower, q);
      }
    }
  });
  return lbm;
}

// ---------------------------------------------------------------------------

/// Global 1-based start position of every row of a fragment.
struct IndexArray {
  std::vector<std::uint64_t> global;

  [[nodiscard]] std::size_t size() const noexcept { return global.size(); }
  [[nodiscard]] std::uint64_t operator[](std::size_t i) const noexcept { return global[i]; }
};

[[nodiscard]] inline IndexArray make_index_array(std::size_t rows, std::uint64_t fragment_start) {
  IndexArray idx;
  idx.global.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) { idx.global[i] = fragment_start + i; }
  return idx;
}

/// passes[i] != 0 marks a row that survived every lower bound.
struct SimilarityMap {
  std::vector<std::uint8_t> passes;

  [[nodiscard]] std::size_t size() const noexcept { return passes.size(); }
  [[nodiscard]] bool operator[](std::size_t i) const noexcept { return passes[i] != 0; }
};

/// Strict conjunction over rows [begin, end): every bound < bsf.
inline void refresh_similarity_range(const LowerBoundMatrix& lbm, double bsf, SimilarityMap& map, std::size_t begin,
                                     std::size_t end) noexcept {
  for (std::size_t i = begin; i < end; ++i) {
    bool pass = true;
    for (std::size_t j = 0; j < LowerBoundMatrix::kColumns && pass; ++j) { pass = lbm.at(i, j) < bsf; }
    map.passes[i] = pass ? 1 : 0;
  }
}

/// Tie-aware variant: a bound equal to the champion distance still passes
/// when the row's global index is smaller than the champion's, since such a
/// row can only win by tying the distance. The champion row itself never
/// passes; it cannot beat itself.
inline void refresh_similarity_range(const LowerBoundMatrix& lbm, const MatchResult& champion, const IndexArray& idx,
                                     SimilarityMap& map, std::size_t begin, std::size_t end) noexcept {
  const double bsf = champion.distance;
  for (std::size_t i = begin; i < end; ++i) {
    const bool earlier = idx[i] < champion.index;
    bool pass = idx[i] != champion.index;
    for (std::size_t j = 0; j < LowerBoundMatrix::kColumns && pass; ++j) {
      const double lb = lbm.at(i, j);
      pass = lb < bsf || (earlier && lb == bsf);
    }
    map.passes[i] = pass ? 1 : 0;
  }
}

[[nodiscard]] inline SimilarityMap refresh_similarity_map(const LowerBoundMatrix& lbm, double bsf) {
  SimilarityMap map;
  map.passes.resize(lbm.rows());
  refresh_similarity_range(lbm, bsf, map, 0, lbm.rows());
  return map;
}

// ---------------------------------------------------------------------------

/// Lane t scans rows [begin[t], end[t]); cursor[t] is the next unscanned row.
struct SegmentCursors {
  std::vector<std::size_t> begin;
  std::vector<std::size_t> end;
  std::vector<std::size_t> cursor;

  [[nodiscard]] static SegmentCursors contiguous(std::size_t rows, std::size_t lanes) {
    if (lanes == 0) { throw std::invalid_argument("segment cursors: lane count must be positive"); }
    SegmentCursors c;
    c.begin.resize(lanes);
    c.end.resize(lanes);
    for (std::size_t t = 0; t < lanes; ++t) { std::tie(c.begin[t], c.end[t]) = LanePool::block(rows, lanes, t); }
    c.cursor = c.begin;
    return c;
  }

  [[nodiscard]] std::size_t lanes() const noexcept { return cursor.size(); }
  [[nodiscard]] bool exhausted() const noexcept {
    for (std::size_t t = 0; t < cursor.size(); ++t) {
      if (cursor[t] < end[t]) { return false; }
    }
    return true;
  }
  [[nodiscard]] std::size_t remaining() const noexcept {
    std::size_t total = 0;
    for (std::size_t t = 0; t < cursor.size(); ++t) { total += end[t] - cursor[t]; }
    return total;
  }
};

enum class CandidateStatus : std::uint8_t { pending, done };

/// Up to `segment` rows per lane, stored in per-lane slices. Rows are copies
/// so DTW evaluation scans contiguous memory.
class CandidateBatch {
public:
  CandidateBatch() = default;
  CandidateBatch(std::size_t lanes, std::size_t segment, std::size_t row_width, std::size_t width)
      : lanes_(lanes), segment_(segment), row_width_(row_width),
        rows_(lanes * segment * row_width, width * sizeof(double)), index_(lanes * segment, 0),
        local_row_(lanes * segment, 0), status_(lanes * segment, CandidateStatus::done), fill_(lanes, 0) {}

  [[nodiscard]] std::size_t lanes() const noexcept { return lanes_; }
  [[nodiscard]] std::size_t segment() const noexcept { return segment_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return lanes_ * segment_; }
  [[nodiscard]] std::size_t lane_fill(std::size_t lane) const noexcept { return fill_[lane]; }
  [[nodiscard]] std::size_t size() const noexcept {
    std::size_t total = 0;
    for (auto f : fill_) { total += f; }
    return total;
  }
  [[nodiscard]] bool empty() const noexcept { return size() == 0; }

  [[nodiscard]] std::size_t slot(std::size_t lane, std::size_t k) const noexcept { return lane * segment_ + k; }
  [[nodiscard]] std::span<const double> row(std::size_t slot) const noexcept {
    return {rows_.data() + slot * row_width_, row_width_};
  }
  [[nodiscard]] std::uint64_t global_index(std::size_t slot) const noexcept { return index_[slot]; }
  [[nodiscard]] std::size_t local_row(std::size_t slot) const noexcept { return local_row_[slot]; }
  [[nodiscard]] CandidateStatus status(std::size_t slot) const noexcept { return status_[slot]; }
  void mark_done(std::size_t slot) noexcept { status_[slot] = CandidateStatus::done; }

  void clear_lane(std::size_t lane) noexcept { fill_[lane] = 0; }

  void push(std::size_t lane, std::span<const double> row, std::size_t local_row, std::uint64_t global) noexcept {
    const std::size_t s = slot(lane, fill_[lane]++);
    std::memcpy(rows_.data() + s * row_width_, row.data(), row_width_ * sizeof(double));
    index_[s] = global;
    local_row_[s] = local_row;
    status_[s] = CandidateStatus::pending;
  }

private:
  std::size_t lanes_ = 0;
  std::size_t segment_ = 0;
  std::size_t row_width_ = 0;
  AlignedBuffer rows_;
  std::vector<std::uint64_t> index_;
  std::vector<std::size_t> local_row_;
  std::vector<CandidateStatus> status_;
  std::vector<std::size_t> fill_;
};

/// Lane `lane` copies up to batch.segment() passing rows from its segment,
/// starting at its cursor and stopping right after the last copied row.
/// Returns the number of rows scanned (copied or skipped).
inline std::size_t fill_lane(const SubsequenceMatrix& s, const SimilarityMap& map, SegmentCursors& cursors,
                             const IndexArray& idx, CandidateBatch& batch, std::size_t lane) noexcept {
  batch.clear_lane(lane);
  std::size_t& cur = cursors.cursor[lane];
  const std::size_t start = cur;
  const std::size_t end = cursors.end[lane];
  while (cur < end && batch.lane_fill(lane) < batch.segment()) {
    if (map[cur]) { batch.push(lane, s.row(cur), cur, idx[cur]); }
    ++cur;
  }
  return cur - start;
}

/// Fills `batch` from every lane; returns the number of rows scanned.
inline std::size_t fill_candidate_batch_into(const SubsequenceMatrix& s, const SimilarityMap& map,
                                             SegmentCursors& cursors, const IndexArray& idx, CandidateBatch& batch,
                                             LanePool* pool = nullptr) {
  if (batch.lanes() != cursors.lanes()) { throw std::invalid_argument("candidate batch: lane count mismatch"); }
  std::vector<std::size_t> scanned(cursors.lanes(), 0);
  for_each_lane(pool, cursors.lanes(),
                [&](std::size_t lane) { scanned[lane] = fill_lane(s, map, cursors, idx, batch, lane); });
  std::size_t total = 0;
  for (auto v : scanned) { total += v; }
  return total;
}

[[nodiscard]] inline CandidateBatch fill_candidate_batch(const SubsequenceMatrix& s, const SimilarityMap& map,
                                                         SegmentCursors& cursors, const IndexArray& idx,
                                                         std::size_t segment) {
  CandidateBatch batch(cursors.lanes(), segment, s.row_width(), s.width());
  fill_candidate_batch_into(s, map, cursors, idx, batch);
  return batch;
}

/// Bytes held by one fragment's layout: subsequence matrix, lower-bound
/// matrix, similarity map, index array, candidate batch and per-lane envelope
/// scratch.
///   rows*row_width*8 + rows*(3*8 + 1 + 8) + lanes*segment*(row_width*8 + 8 + 8 + 1) + lanes*2*n*8
[[nodiscard]] constexpr std::uint64_t layout_footprint_bytes(std::uint64_t rows, std::uint64_t n,
                                                            std::uint64_t row_width, std::uint64_t lanes,
                                                            std::uint64_t segment) noexcept {
  return rows * row_width * 8 + rows * (3 * 8 + 1 + 8) + lanes * segment * (row_width * 8 + 8 + 8 + 1) +
         lanes * 2 * n * 8;
}

} // namespace dtwmatch
