#pragma once

// Workflows behind the command-line tool: search, verify and bench, plus the
// run configuration they share and the report formats they emit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dtwmatch/baseline_ucr.hpp"
#include "dtwmatch/distributed.hpp"
#include "dtwmatch/errors.hpp"
#include "dtwmatch/local_search.hpp"
#include "dtwmatch/random.hpp"
#include "dtwmatch/series_io.hpp"

namespace dtwmatch {

/// Band radius as given by the user: absolute cells ("16") or a fraction of
/// the query length ("0.5n", "n"). Fractions resolve to round(f * n).
class RadiusSpec {
public:
  RadiusSpec() = default;
  [[nodiscard]] static RadiusSpec cells(std::size_t r) {
    RadiusSpec s;
    s.cells_ = r;
    return s;
  }
  [[nodiscard]] static RadiusSpec fraction(double f) {
    if (!(f >= 0.0 && f <= 1.0)) { throw config_error("radius fraction must lie in [0, 1]"); }
    RadiusSpec s;
    s.fraction_ = f;
    return s;
  }

  [[nodiscard]] static RadiusSpec parse(std::string text) {
    if (text.empty()) { throw config_error("empty radius"); }
    if (text.back() == 'n' || text.back() == 'N') {
      text.pop_back();
      if (text.empty()) { return fraction(1.0); }
      if (text.back() == '*' || text.back() == 'x') { text.pop_back(); }
      const auto v = detail::parse_value(text);
      if (!v) { throw config_error("invalid radius fraction '" + text + "n'"); }
      return fraction(*v);
    }
    const auto v = detail::parse_value(text);
    if (!v || *v < 0 || std::floor(*v) != *v) {
      throw config_error("radius must be a non-negative integer or a fraction of n such as 0.5n, got '" + text + "'");
    }
    return cells(static_cast<std::size_t>(*v));
  }

  [[nodiscard]] std::size_t resolve(std::size_t n) const {
    if (fraction_) { return static_cast<std::size_t>(std::llround(*fraction_ * static_cast<double>(n))); }
    if (cells_ > n) {
      throw config_error("radius " + std::to_string(cells_) + " exceeds the query length " + std::to_string(n));
    }
    return cells_;
  }

  [[nodiscard]] std::string str() const {
    if (!fraction_) { return std::to_string(cells_); }
    std::ostringstream ss;
    ss << *fraction_ << 'n';
    return ss.str();
  }

private:
  std::optional<double> fraction_;
  std::size_t cells_ = 0;
};

enum class OutputFormat { human, json };

struct RunConfig {
  std::optional<std::string> series_path;
  std::optional<std::string> query_path;
  std::optional<SeriesFormat> format;
  /// Synthetic random-walk length when no series file is given.
  std::size_t length = 10'000;
  /// Query length; defaults to 128 for a synthetic query, truncates a loaded one.
  std::optional<std::size_t> n;
  RadiusSpec radius = RadiusSpec::fraction(0.5);
  std::size_t fragments = 1;
  std::size_t threads = 1;
  std::size_t segment = 100;
  std::size_t width = kDefaultWidth;
  std::uint64_t seed = 42;
  double epsilon = kDefaultEpsilon;
  bool early_abandon = true;
  CascadeOrder cascade = kDefaultCascade;
  Transport transport = Transport::in_process;
  std::chrono::milliseconds timeout = kDefaultRoundTimeout;
  std::size_t rounds_per_reduction = 1;
  std::uint64_t memory_budget_bytes = std::uint64_t{4} << 30;
  OutputFormat output = OutputFormat::human;
  /// verify only: corrupt the lower bounds of the true best row.
  bool inject_fault = false;
};

[[nodiscard]] inline CascadeOrder parse_cascade(const std::string& text) {
  CascadeOrder order{};
  std::size_t count = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (count == 3) { throw config_error("cascade lists more than three bounds"); }
    if (item == "kim" || item == "kim_fl") {
      order[count++] = LowerBound::kim_fl;
    } else if (item == "ec" || item == "keogh_ec") {
      order[count++] = LowerBound::keogh_ec;
    } else if (item == "eq" || item == "keogh_eq") {
      order[count++] = LowerBound::keogh_eq;
    } else {
      throw config_error("unknown lower bound '" + item + "' (expected kim, ec, eq)");
    }
  }
  if (count != 3) { throw config_error("cascade must name all three bounds, e.g. kim,ec,eq"); }
  try {
    require_permutation(order);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  return order;
}

struct Inputs {
  TimeSeries series;
  TimeSeries query;
};

/// The query from --query (truncated to n when n is set) or a synthetic walk of length n.
[[nodiscard]] inline TimeSeries load_query(const RunConfig& cfg) {
  TimeSeries query;
  if (cfg.query_path) {
    query = load_series(*cfg.query_path, cfg.format.value_or(infer_format(*cfg.query_path)));
    if (cfg.n) {
      if (query.size() < *cfg.n) {
        throw config_error("query file holds " + std::to_string(query.size()) + " values, fewer than n=" +
                           std::to_string(*cfg.n));
      }
      query.values.resize(*cfg.n);
    }
  } else {
    const std::size_t n = cfg.n.value_or(128);
    query.values = gen_random_walk(n, cfg.seed, streams::query);
    query.source = "random-walk(m=" + std::to_string(n) + ",seed=" + std::to_string(cfg.seed) + ",stream=query)";
  }
  if (query.size() == 0) { throw config_error("query is empty"); }
  return query;
}

[[nodiscard]] inline Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  in.query = load_query(cfg);
  if (cfg.series_path) {
    in.series = load_series(*cfg.series_path, cfg.format.value_or(infer_format(*cfg.series_path)));
  } else {
    in.series.values = gen_random_walk(cfg.length, cfg.seed, streams::series);
    in.series.source = "random-walk(m=" + std::to_string(cfg.length) + ",seed=" + std::to_string(cfg.seed) + ")";
  }
  if (in.series.size() < in.query.size()) {
    throw config_error("series length " + std::to_string(in.series.size()) + " is shorter than the query length " +
                       std::to_string(in.query.size()));
  }
  return in;
}

[[nodiscard]] inline SearchParams make_params(const RunConfig& cfg, std::size_t n) {
  SearchParams p;
  p.radius = BandRadius{cfg.radius.resolve(n)};
  p.width = cfg.width;
  p.lanes = cfg.threads;
  p.segment = cfg.segment;
  p.seed = cfg.seed;
  p.epsilon = cfg.epsilon;
  p.early_abandon = cfg.early_abandon;
  p.cascade = cfg.cascade;
  p.memory_budget_bytes = cfg.memory_budget_bytes;
  validate(p);
  return p;
}

[[nodiscard]] inline DistributedOptions make_distributed_options(const RunConfig& cfg, std::size_t fragments) {
  DistributedOptions o;
  o.fragments = fragments;
  o.transport = cfg.transport;
  o.timeout = cfg.timeout;
  o.rounds_per_reduction = cfg.rounds_per_reduction;
  return o;
}

// ---------------------------------------------------------------------------
// search

struct SearchReport {
  MatchResult best;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t r = 0;
  std::size_t rows = 0;
  std::size_t fragments = 1;
  std::size_t threads = 1;
  std::size_t segment = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  bool early_abandon = true;
  std::string transport;
  std::string series;
  std::string query;
  std::size_t dtw_evals = 0;
  double pruning_ratio = 0.0;
  double wall_ms = 0.0;
};

/// Fields that legitimately change between otherwise identical runs.
inline constexpr const char* kTimingFields[] = {"wall_ms"};

[[nodiscard]] inline SearchReport run_search(const RunConfig& cfg, const Inputs& in) {
  const auto params = make_params(cfg, in.query.size());
  SearchReport rep;
  rep.m = in.series.size();
  rep.n = in.query.size();
  rep.r = params.radius.cells;
  rep.rows = rep.m - rep.n + 1;
  rep.fragments = cfg.fragments;
  rep.threads = cfg.threads;
  rep.segment = cfg.segment;
  rep.width = cfg.width;
  rep.seed = cfg.seed;
  rep.early_abandon = cfg.early_abandon;
  rep.transport = cfg.fragments > 1 ? to_string(cfg.transport) : "none";
  rep.series = in.series.source;
  rep.query = in.query.source;

  const auto started = std::chrono::steady_clock::now();
  if (cfg.fragments <= 1) {
    const auto out = run_local_search(in.series.view(), in.query.view(), params);
    rep.best = out.best;
    rep.dtw_evals = out.dtw_evals;
    rep.pruning_ratio = out.pruning_ratio();
  } else {
    const auto out = run_distributed(in.series.view(), in.query.view(), params,
                                     make_distributed_options(cfg, cfg.fragments));
    rep.best = out.best;
    rep.dtw_evals = out.dtw_evals();
    rep.pruning_ratio = out.pruning_ratio();
  }
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

[[nodiscard]] inline SearchReport run_search(const RunConfig& cfg) { return run_search(cfg, load_inputs(cfg)); }

[[nodiscard]] inline nlohmann::ordered_json to_json(const SearchReport& rep) {
  nlohmann::ordered_json j;
  j["index"] = rep.best.index;
  j["distance_squared"] = rep.best.distance;
  j["m"] = rep.m;
  j["n"] = rep.n;
  j["r"] = rep.r;
  j["rows"] = rep.rows;
  j["fragments"] = rep.fragments;
  j["threads"] = rep.threads;
  j["segment"] = rep.segment;
  j["width"] = rep.width;
  j["seed"] = rep.seed;
  j["early_abandon"] = rep.early_abandon;
  j["transport"] = rep.transport;
  j["series"] = rep.series;
  j["query"] = rep.query;
  j["dtw_evals"] = rep.dtw_evals;
  j["pruning_ratio"] = rep.pruning_ratio;
  j["wall_ms"] = rep.wall_ms;
  return j;
}

[[nodiscard]] inline std::string to_human(const SearchReport& rep) {
  std::ostringstream ss;
  ss << "best match index        " << rep.best.index << '\n'
     << "squared DTW distance    " << rep.best.distance << '\n'
     << "series length m         " << rep.m << "  (" << rep.series << ")\n"
     << "query length n          " << rep.n << '\n'
     << "band radius r           " << rep.r << '\n'
     << "fragments x threads     " << rep.fragments << " x " << rep.threads << '\n'
     << "DTW evaluations         " << rep.dtw_evals << " of " << rep.rows << " subsequences\n"
     << "pruning ratio           " << rep.pruning_ratio << '\n'
     << "wall time (ms)          " << rep.wall_ms << '\n';
  return ss.str();
}

// ---------------------------------------------------------------------------
// verify

[[nodiscard]] inline bool same_match(const MatchResult& a, const MatchResult& b, double rel_tol = 1e-9) {
  if (a.index != b.index) { return false; }
  const double scale = std::max(std::abs(a.distance), std::abs(b.distance));
  return std::abs(a.distance - b.distance) <= rel_tol * scale;
}

struct VerifyReport {
  MatchResult brute_force;
  MatchResult ucr;
  MatchResult local;
  MatchResult distributed;
  ScanStats ucr_stats;
  std::size_t fragments = 0;
  bool agree = false;
};

/// Runs all four search paths on the same input. The distributed run uses the
/// configured fragment count, or 4 (capped by the subsequence count) when it is 1.
[[nodiscard]] inline VerifyReport run_verify(const RunConfig& cfg, const Inputs& in) {
  auto params = make_params(cfg, in.query.size());
  const BandRadius r = params.radius;
  VerifyReport rep;
  rep.brute_force = brute_force_search(in.series.view(), in.query.view(), r, cfg.epsilon);
  if (cfg.inject_fault) { params.fault_row = rep.brute_force.index; }

  UcrOptions ucr_opts{cfg.epsilon, cfg.early_abandon, cfg.cascade};
  const auto ucr = ucr_dtw_search(in.series.view(), in.query.view(), r, ucr_opts);
  rep.ucr = ucr.best;
  rep.ucr_stats = ucr.stats;
  rep.local = local_best_match(in.series.view(), in.query.view(), params);

  const std::size_t rows = in.series.size() - in.query.size() + 1;
  rep.fragments = cfg.fragments > 1 ? cfg.fragments : std::min<std::size_t>(4, rows);
  rep.distributed =
      run_distributed(in.series.view(), in.query.view(), params, make_distributed_options(cfg, rep.fragments)).best;

  rep.agree = same_match(rep.brute_force, rep.ucr) && same_match(rep.brute_force, rep.local) &&
              same_match(rep.brute_force, rep.distributed);
  return rep;
}

[[nodiscard]] inline VerifyReport run_verify(const RunConfig& cfg) { return run_verify(cfg, load_inputs(cfg)); }

[[nodiscard]] inline nlohmann::ordered_json to_json(const VerifyReport& rep) {
  auto pair = [](const MatchResult& m) {
    nlohmann::ordered_json j;
    j["index"] = m.index;
    j["distance_squared"] = m.distance;
    return j;
  };
  nlohmann::ordered_json j;
  j["agree"] = rep.agree;
  j["brute_force"] = pair(rep.brute_force);
  j["ucr"] = pair(rep.ucr);
  j["local"] = pair(rep.local);
  j["distributed"] = pair(rep.distributed);
  j["fragments"] = rep.fragments;
  j["ucr_dtw_evals"] = rep.ucr_stats.dtw_evals;
  j["ucr_rejected"] = rep.ucr_stats.rejected;
  return j;
}

[[nodiscard]] inline std::string to_human(const VerifyReport& rep) {
  std::ostringstream ss;
  ss.precision(17);
  auto line = [&](const char* name, const MatchResult& m) {
    ss << name << " index " << m.index << " distance " << m.distance << '\n';
  };
  line("brute force  ", rep.brute_force);
  line("ucr cascade  ", rep.ucr);
  line("local search ", rep.local);
  line("distributed  ", rep.distributed);
  ss << (rep.agree ? "OK: all four search paths agree\n" : "MISMATCH: search paths disagree\n");
  return ss.str();
}

// ---------------------------------------------------------------------------
// bench

struct BenchSweep {
  std::vector<std::size_t> threads{1, 2, 4, 8};
  std::vector<RadiusSpec> radii{RadiusSpec::fraction(0.1), RadiusSpec::fraction(0.5), RadiusSpec::fraction(1.0)};
  std::vector<std::size_t> lengths{128};
  std::size_t repeats = 1;
};

struct BenchRow {
  std::size_t n = 0;
  std::size_t r = 0;
  std::size_t threads = 0;
  double wall_ms = 0.0;
  double speedup = 0.0;     // t_1 / t_k
  double efficiency = 0.0;  // speedup / k
  std::size_t dtw_evals = 0;
  std::size_t rows = 0;
  double pruning_ratio = 0.0;
  MatchResult best;
};

/// For every (n, r) cell the p = 1 run is timed first and serves as t_1.
/// Wall time is the minimum over `repeats` runs.
[[nodiscard]] inline std::vector<BenchRow> run_bench(const RunConfig& cfg, const BenchSweep& sweep) {
  if (sweep.repeats == 0) { throw config_error("repeats must be at least 1"); }
  std::vector<BenchRow> table;
  for (const std::size_t n : sweep.lengths) {
    RunConfig cell = cfg;
    cell.n = n;
    const Inputs in = load_inputs(cell);
    for (const auto& radius : sweep.radii) {
      cell.radius = radius;
      std::vector<std::size_t> lanes{1};
      for (auto p : sweep.threads) {
        if (p != 1) { lanes.push_back(p); }
      }
      double t1 = 0.0;
      for (const std::size_t p : lanes) {
        cell.threads = p;
        BenchRow row;
        row.n = n;
        row.threads = p;
        row.wall_ms = kInfinity;
        for (std::size_t rep = 0; rep < sweep.repeats; ++rep) {
          const auto report = run_search(cell, in);
          row.wall_ms = std::min(row.wall_ms, report.wall_ms);
          row.r = report.r;
          row.dtw_evals = report.dtw_evals;
          row.rows = report.rows;
          row.pruning_ratio = report.pruning_ratio;
          row.best = report.best;
        }
        if (p == 1) { t1 = row.wall_ms; }
        row.speedup = t1 / row.wall_ms;
        row.efficiency = row.speedup / static_cast<double>(p);
        const bool requested =
            p != 1 || std::find(sweep.threads.begin(), sweep.threads.end(), std::size_t{1}) != sweep.threads.end();
        if (requested) { table.push_back(row); }
      }
    }
  }
  return table;
}

[[nodiscard]] inline std::string bench_csv(const std::vector<BenchRow>& table) {
  std::ostringstream ss;
  ss << "n,r,threads,wall_ms,speedup,efficiency,dtw_evals,rows,pruning_ratio,index,distance_squared\n";
  ss.precision(10);
  for (const auto& row : table) {
    ss << row.n << ',' << row.r << ',' << row.threads << ',' << row.wall_ms << ',' << row.speedup << ','
       << row.efficiency << ',' << row.dtw_evals << ',' << row.rows << ',' << row.pruning_ratio << ','
       << row.best.index << ',' << row.best.distance << '\n';
  }
  return ss.str();
}

} // namespace dtwmatch
