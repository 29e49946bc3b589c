#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace dtwmatch {

/// Fixed stream ids for everything derived from the single user seed.
namespace streams {
inline constexpr std::uint64_t series = 0;
inline constexpr std::uint64_t query = 1;
inline constexpr std::uint64_t noise = 2;
/// Random initial row of fragment k uses stream seed_row_base + k.
inline constexpr std::uint64_t seed_row_base = 1u << 20;
} // namespace streams

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for `stream`. Different streams of one seed do not
/// overlap in practice and the mapping is stable across platforms.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

[[nodiscard]] inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(seed, stream));
}

/// Uniform integer in [0, bound) without modulo bias; stable across standard libraries.
[[nodiscard]] inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) { throw std::invalid_argument("uniform_below: empty range"); }
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do { x = rng(); } while (x >= limit);
  return x % bound;
}

/// t_1 = g_1, t_i = t_{i-1} + g_i with g_i standard normal.
[[nodiscard]] inline std::vector<double> gen_random_walk(std::size_t m, std::uint64_t seed,
                                                         std::uint64_t stream = streams::series) {
  if (m == 0) { throw std::invalid_argument("gen_random_walk: length must be positive"); }
  auto rng = make_rng(seed, stream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(m);
  double value = 0.0;
  for (auto& v : out) {
    value += gauss(rng);
    v = value;
  }
  return out;
}

} // namespace dtwmatch
