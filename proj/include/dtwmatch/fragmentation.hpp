#pragma once

// Overlap partitioning: the series is cut into F fragments; every fragment
// except the last is extended by n-1 points from the next one so that no
// subsequence straddling a boundary is lost. Positions are 1-based.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtwmatch/errors.hpp"

namespace dtwmatch {

struct Fragment {
  std::size_t id = 0;
  std::uint64_t start = 1;   // global position of the first point
  std::uint64_t length = 0;  // points, including the overlap tail
  std::uint64_t rows = 0;    // subsequences starting in this fragment (length - n + 1)

  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct FragmentPlan {
  std::uint64_t series_length = 0;
  std::uint64_t query_length = 0;
  std::vector<Fragment> fragments;

  [[nodiscard]] std::uint64_t subsequences() const noexcept { return series_length - query_length + 1; }
  [[nodiscard]] std::size_t size() const noexcept { return fragments.size(); }
  [[nodiscard]] const Fragment& operator[](std::size_t k) const { return fragments.at(k); }
};

[[nodiscard]] inline FragmentPlan partition_overlap(std::uint64_t m, std::uint64_t n, std::uint64_t f) {
  if (n == 0) { throw config_error("query length must be positive"); }
  if (f == 0) { throw config_error("fragment count must be at least 1"); }
  if (m < n) {
    throw config_error("series length " + std::to_string(m) + " is shorter than the query length " + std::to_string(n));
  }
  const std::uint64_t total = m - n + 1;
  if (f > total) {
    throw config_error("fragment count " + std::to_string(f) + " exceeds the " + std::to_string(total) +
                       " subsequences; some fragment would own none");
  }
  const std::uint64_t base = total / f;
  FragmentPlan plan{m, n, {}};
  plan.fragments.reserve(f);
  for (std::uint64_t k = 0; k < f; ++k) {
    const std::uint64_t rows = k + 1 == f ? base + total % f : base;
    plan.fragments.push_back(Fragment{static_cast<std::size_t>(k), k * base + 1, rows + n - 1, rows});
  }
  return plan;
}

/// Global start position of local row `row` (1-based) of fragment k.
[[nodiscard]] inline std::uint64_t to_global_index(const FragmentPlan& plan, std::size_t k, std::uint64_t row) {
  if (k >= plan.size()) { throw std::out_of_range("fragment id " + std::to_string(k) + " out of range"); }
  const auto& frag = plan.fragments[k];
  if (row == 0 || row > frag.rows) {
    throw std::out_of_range("row " + std::to_string(row) + " outside fragment " + std::to_string(k) + " (1.." +
                            std::to_string(frag.rows) + ")");
  }
  return frag.start + row - 1;
}

/// Inverse of to_global_index: the fragment owning a global start and its local row.
[[nodiscard]] inline std::pair<std::size_t, std::uint64_t> to_local_index(const FragmentPlan& plan,
                                                                         std::uint64_t global) {
  if (global == 0 || global > plan.subsequences()) {
    throw std::out_of_range("global position " + std::to_string(global) + " outside 1.." +
                            std::to_string(plan.subsequences()));
  }
  const std::uint64_t base = plan.fragments.front().rows;
  std::size_t k = static_cast<std::size_t>((global - 1) / base);
  if (k >= plan.size()) { k = plan.size() - 1; }
  return {k, global - plan.fragments[k].start + 1};
}

/// Text manifest, one fragment per line, so a worker can read just its slice
/// of a raw-f64-le file:
///   # fragment byte_offset element_count global_start rows
[[nodiscard]] inline std::string plan_manifest(const FragmentPlan& plan, std::size_t element_bytes = sizeof(double)) {
  std::string out = "# series_length " + std::to_string(plan.series_length) + " query_length " +
                    std::to_string(plan.query_length) + " fragments " + std::to_string(plan.size()) + "\n";
  out += "# fragment byte_offset element_count global_start rows\n";
  for (const auto& f : plan.fragments) {
    out += std::to_string(f.id) + ' ' + std::to_string((f.start - 1) * element_bytes) + ' ' +
           std::to_string(f.length) + ' ' + std::to_string(f.start) + ' ' + std::to_string(f.rows) + '\n';
  }
  return out;
}

} // namespace dtwmatch
