#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dtwmatch/errors.hpp"

namespace dtwmatch {

struct TimeSeries {
  std::vector<double> values;
  std::string source;  // file path or generator description

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] std::span<const double> view() const noexcept { return values; }
};

enum class SeriesFormat { raw_f64_le, csv, text };

[[nodiscard]] inline const char* to_string(SeriesFormat f) noexcept {
  switch (f) {
    case SeriesFormat::raw_f64_le: return "raw-f64-le";
    case SeriesFormat::csv: return "csv";
    case SeriesFormat::text: return "text";
  }
  return "?";
}

[[nodiscard]] inline SeriesFormat parse_format(std::string_view name) {
  if (name == "raw-f64-le" || name == "raw") { return SeriesFormat::raw_f64_le; }
  if (name == "csv") { return SeriesFormat::csv; }
  if (name == "text" || name == "txt") { return SeriesFormat::text; }
  throw config_error("unknown series format '" + std::string(name) + "' (expected raw-f64-le, csv or text)");
}

/// .bin/.f64/.raw → raw-f64-le, .csv → csv, anything else → text.
[[nodiscard]] inline SeriesFormat infer_format(std::string_view path) {
  auto ends_with = [&](std::string_view ext) {
    return path.size() >= ext.size() && path.substr(path.size() - ext.size()) == ext;
  };
  if (ends_with(".bin") || ends_with(".f64") || ends_with(".raw")) { return SeriesFormat::raw_f64_le; }
  if (ends_with(".csv")) { return SeriesFormat::csv; }
  return SeriesFormat::text;
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw config_error("cannot open series file '" + path + "'"); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) { s.remove_prefix(1); }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) { s.remove_suffix(1); }
  return s;
}

/// Parses one finite double or returns nullopt.
inline std::optional<double> parse_value(std::string_view token) {
  if (!token.empty() && token.front() == '+') { token.remove_prefix(1); }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) { return std::nullopt; }
  return v;
}

inline double decode_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) { bits |= std::uint64_t{p[i]} << (8 * i); }
  return std::bit_cast<double>(bits);
}

inline std::vector<double> decode_raw(std::string_view bytes, const std::string& path, std::uint64_t first_element) {
  if (bytes.size() % 8 != 0) {
    throw config_error("'" + path + "': size " + std::to_string(bytes.size()) + " is not a multiple of 8 bytes");
  }
  std::vector<double> out(bytes.size() / 8);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = decode_f64_le(p + 8 * i);
    if (!std::isfinite(out[i])) {
      throw config_error("'" + path + "': non-finite value at element " + std::to_string(first_element + i) +
                         " (byte offset " + std::to_string(8 * (first_element + i)) + ")");
    }
  }
  return out;
}

} // namespace detail

[[nodiscard]] inline TimeSeries load_series(const std::string& path, SeriesFormat format,
                                            std::optional<std::size_t> expected_count = std::nullopt) {
  const std::string data = detail::read_file(path);
  TimeSeries ts;
  ts.source = path;
  if (format == SeriesFormat::raw_f64_le) {
    ts.values = detail::decode_raw(data, path, 0);
  } else {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= data.size()) {
      auto eol = data.find('\n', pos);
      if (eol == std::string::npos) { eol = data.size(); }
      std::string_view line(data.data() + pos, eol - pos);
      ++line_no;
      pos = eol + 1;
      line = detail::trim(line);
      if (line.empty() || line.front() == '#') { continue; }
      if (format == SeriesFormat::csv) {
        std::size_t column = 0;
        std::size_t start = 0;
        for (;;) {
          const auto comma = line.find(',', start);
          const auto field = detail::trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
          ++column;
          const auto v = detail::parse_value(field);
          if (!v) {
            throw config_error("'" + path + "': row " + std::to_string(line_no) + ", column " + std::to_string(column) +
                               ": invalid or non-finite value '" + std::string(field) + "'");
          }
          ts.values.push_back(*v);
          if (comma == std::string_view::npos) { break; }
          start = comma + 1;
        }
      } else {
        std::size_t start = 0;
        while (start < line.size()) {
          while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) { ++start; }
          if (start >= line.size()) { break; }
          auto stop = start;
          while (stop < line.size() && line[stop] != ' ' && line[stop] != '\t') { ++stop; }
          const auto token = line.substr(start, stop - start);
          const auto v = detail::parse_value(token);
          if (!v) {
            throw config_error("'" + path + "': line " + std::to_string(line_no) + ": invalid or non-finite value '" +
                               std::string(token) + "'");
          }
          ts.values.push_back(*v);
          start = stop;
        }
      }
    }
  }
  if (expected_count && ts.values.size() != *expected_count) {
    throw config_error("'" + path + "': expected " + std::to_string(*expected_count) + " values, decoded " +
                       std::to_string(ts.values.size()));
  }
  return ts;
}

/// Reads `count` elements starting at element `offset` of a raw-f64-le file.
[[nodiscard]] inline TimeSeries load_raw_slice(const std::string& path, std::uint64_t offset, std::uint64_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw config_error("cannot open series file '" + path + "'"); }
  in.seekg(static_cast<std::streamoff>(offset * 8));
  std::string bytes(static_cast<std::size_t>(count * 8), '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::uint64_t>(in.gcount()) != count * 8) {
    throw config_error("'" + path + "': slice [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                       ") runs past the end of the file");
  }
  TimeSeries ts;
  ts.values = detail::decode_raw(bytes, path, offset);
  ts.source = path + "[" + std::to_string(offset) + ":" + std::to_string(offset + count) + "]";
  return ts;
}

inline void save_series(const std::string& path, std::span<const double> values, SeriesFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw config_error("cannot write '" + path + "'"); }
  if (format == SeriesFormat::raw_f64_le) {
    std::string bytes(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(values[i]);
      for (int b = 0; b < 8; ++b) { bytes[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff); }
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  } else {
    char buf[64];
    for (double v : values) {
      // %.17g round-trips every double exactly.
      const int len = std::snprintf(buf, sizeof(buf), "%.17g\n", v);
      out.write(buf, len);
    }
  }
  if (!out) { throw config_error("failed writing '" + path + "'"); }
}

} // namespace dtwmatch
