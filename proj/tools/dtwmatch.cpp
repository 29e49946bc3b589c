// dtwmatch: best-match subsequence search under banded DTW.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 transport error, 4 verification mismatch.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dtwmatch/app.hpp"
#include "dtwmatch/dtwmatch.hpp"

namespace {

using namespace dtwmatch;

constexpr int kExitConfig = 2;
constexpr int kExitTransport = 3;
constexpr int kExitMismatch = 4;

std::string env_name(const std::string& flag) {
  std::string out = "DTWMATCH_";
  for (char c : flag) { out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }
  return out;
}

// Raw flag values; converted to a RunConfig after parsing.
struct Flags {
  std::string series;
  std::string query;
  std::string format;
  std::size_t length = 10'000;
  std::size_t n = 128;
  std::string r = "0.5n";
  std::size_t fragments = 1;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::size_t segment = 100;
  std::size_t width = kDefaultWidth;
  std::uint64_t seed = 42;
  double epsilon = kDefaultEpsilon;
  bool early_abandon = true;
  std::string transport = "inproc";
  std::string coordinator;
  std::string listen = "127.0.0.1:7700";
  std::size_t worker_id = 0;
  std::string output = "human";
  std::string cascade = "kim,ec,eq";
  std::uint64_t timeout_ms = 30'000;
  std::size_t rounds_per_reduction = 1;
  std::uint64_t memory_budget_mb = 4096;
  bool inject_fault = false;

  CLI::Option* n_opt = nullptr;
};

CLI::Option* add(CLI::App* app, const std::string& flag, auto& target, const std::string& help) {
  return app->add_option("--" + flag, target, help)->envname(env_name(flag))->capture_default_str();
}

void add_input_flags(CLI::App* app, Flags& f) {
  add(app, "series", f.series, "series file (random walk of --length when omitted)");
  add(app, "query", f.query, "query file (random walk of --n when omitted)");
  add(app, "format", f.format, "raw-f64-le | csv | text (inferred from the extension when omitted)");
  add(app, "length", f.length, "length m of the synthetic series");
  f.n_opt = add(app, "n", f.n, "query length; truncates a query file");
  add(app, "seed", f.seed, "seed for synthetic data and the initial candidate");
}

void add_search_flags(CLI::App* app, Flags& f) {
  add_input_flags(app, f);
  add(app, "r", f.r, "band radius: cells (16) or a fraction of n (0.5n)");
  add(app, "fragments", f.fragments, "fragment count F");
  add(app, "threads", f.threads, "lanes per fragment p");
  add(app, "segment", f.segment, "rows per lane per round s");
  add(app, "width", f.width, "row padding width w (power of two)");
  add(app, "epsilon", f.epsilon, "standard deviation below which a window normalizes to zeros");
  add(app, "early-abandon", f.early_abandon, "abandon DTW once a row exceeds the best-so-far");
  add(app, "transport", f.transport, "inproc | tcp")->check(CLI::IsMember({"inproc", "tcp"}));
  add(app, "cascade", f.cascade, "lower bound order, e.g. kim,ec,eq");
  add(app, "timeout-ms", f.timeout_ms, "per-round reduction timeout");
  add(app, "rounds-per-reduction", f.rounds_per_reduction, "improve rounds between two reductions");
  add(app, "memory-budget-mb", f.memory_budget_mb, "refuse fragments whose working set exceeds this");
  add(app, "output", f.output, "human | json")->check(CLI::IsMember({"human", "json"}));
}

RunConfig to_config(const Flags& f) {
  RunConfig cfg;
  if (!f.series.empty()) { cfg.series_path = f.series; }
  if (!f.query.empty()) { cfg.query_path = f.query; }
  if (!f.format.empty()) { cfg.format = parse_format(f.format); }
  cfg.length = f.length;
  if (f.query.empty() || (f.n_opt && f.n_opt->count() > 0) || std::getenv("DTWMATCH_N")) { cfg.n = f.n; }
  cfg.radius = RadiusSpec::parse(f.r);
  cfg.fragments = f.fragments;
  cfg.threads = f.threads;
  cfg.segment = f.segment;
  cfg.width = f.width;
  cfg.seed = f.seed;
  cfg.epsilon = f.epsilon;
  cfg.early_abandon = f.early_abandon;
  cfg.transport = f.transport == "tcp" ? Transport::tcp : Transport::in_process;
  cfg.cascade = parse_cascade(f.cascade);
  cfg.timeout = std::chrono::milliseconds(f.timeout_ms);
  cfg.rounds_per_reduction = f.rounds_per_reduction;
  cfg.memory_budget_bytes = f.memory_budget_mb << 20;
  cfg.output = f.output == "json" ? OutputFormat::json : OutputFormat::human;
  cfg.inject_fault = f.inject_fault;
  if (cfg.fragments == 0) { throw config_error("--fragments must be at least 1"); }
  if (cfg.length == 0) { throw config_error("--length must be at least 1"); }
  return cfg;
}

int cmd_search(const Flags& f) {
  const auto cfg = to_config(f);
  const auto report = run_search(cfg);
  if (cfg.output == OutputFormat::json) {
    std::cout << to_json(report).dump(2) << '\n';
  } else {
    std::cout << to_human(report);
  }
  return 0;
}

int cmd_verify(const Flags& f) {
  const auto cfg = to_config(f);
  const auto report = run_verify(cfg);
  if (cfg.output == OutputFormat::json) {
    std::cout << to_json(report).dump(2) << '\n';
  } else {
    std::cout << to_human(report);
  }
  return report.agree ? 0 : kExitMismatch;
}

template <typename T>
std::vector<T> split_list(const std::string& text, auto convert) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) { out.push_back(convert(item)); }
  }
  if (out.empty()) { throw config_error("empty list '" + text + "'"); }
  return out;
}

std::size_t to_count(const std::string& s) {
  const auto v = detail::parse_value(s);
  if (!v || *v < 0 || std::floor(*v) != *v) { throw config_error("expected a non-negative integer, got '" + s + "'"); }
  return static_cast<std::size_t>(*v);
}

int cmd_bench(const Flags& f, const std::string& p_list, const std::string& r_list, const std::string& n_list,
              std::size_t repeats, const std::string& csv_path) {
  const auto cfg = to_config(f);
  BenchSweep sweep;
  sweep.threads = split_list<std::size_t>(p_list, to_count);
  sweep.radii = split_list<RadiusSpec>(r_list, [](const std::string& s) { return RadiusSpec::parse(s); });
  sweep.lengths = split_list<std::size_t>(n_list, to_count);
  sweep.repeats = repeats;
  const auto csv = bench_csv(run_bench(cfg, sweep));
  if (csv_path.empty() || csv_path == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(csv_path);
    if (!out) { throw config_error("cannot write '" + csv_path + "'"); }
    out << csv;
  }
  return 0;
}

int cmd_generate(std::size_t length, std::uint64_t seed, const std::string& stream, const std::string& out_path,
                 const std::string& format) {
  const std::uint64_t id = stream == "query" ? streams::query : streams::series;
  const auto values = gen_random_walk(length, seed, id);
  save_series(out_path, values, format.empty() ? infer_format(out_path) : parse_format(format));
  std::cerr << "wrote " << values.size() << " values to " << out_path << '\n';
  return 0;
}

int cmd_partition(const Flags& f) {
  const auto cfg = to_config(f);
  std::size_t m = cfg.length;
  if (cfg.series_path) { m = load_series(*cfg.series_path, cfg.format.value_or(infer_format(*cfg.series_path))).size(); }
  const auto plan = partition_overlap(m, cfg.n.value_or(128), cfg.fragments);
  std::cout << plan_manifest(plan);
  return 0;
}

int cmd_coordinate(const std::string& listen, std::size_t workers, std::uint64_t timeout_ms, const std::string& output) {
  tcp::Coordinator coordinator(tcp::parse_endpoint(listen), workers, std::chrono::milliseconds(timeout_ms));
  std::cerr << "coordinating " << workers << " workers on port " << coordinator.port() << '\n';
  const auto best = coordinator.serve();
  if (output == "json") {
    nlohmann::ordered_json j;
    j["index"] = best.index;
    j["distance_squared"] = best.distance;
    j["workers"] = workers;
    j["rounds"] = coordinator.rounds();
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "best match index " << best.index << " distance " << best.distance << " after "
              << coordinator.rounds() << " rounds\n";
  }
  return 0;
}

int cmd_worker(const Flags& f) {
  const auto cfg = to_config(f);
  const auto endpoint = tcp::parse_endpoint(f.coordinator);

  // Raw files are read slice-wise so a worker only touches its own fragment.
  TimeSeries fragment;
  TimeSeries query;
  std::uint64_t start = 0;
  const bool raw_series =
      cfg.series_path && cfg.format.value_or(infer_format(*cfg.series_path)) == SeriesFormat::raw_f64_le;
  if (raw_series) {
    query = load_query(cfg);
    std::ifstream probe(*cfg.series_path, std::ios::binary | std::ios::ate);
    if (!probe) { throw config_error("cannot open series file '" + *cfg.series_path + "'"); }
    const auto bytes = static_cast<std::uint64_t>(probe.tellg());
    if (bytes % 8 != 0) { throw config_error("'" + *cfg.series_path + "' is not a whole number of f64 values"); }
    const auto plan = partition_overlap(bytes / 8, query.size(), cfg.fragments);
    if (f.worker_id >= plan.size()) { throw config_error("--worker-id out of range"); }
    start = plan[f.worker_id].start;
    fragment = load_raw_slice(*cfg.series_path, start - 1, plan[f.worker_id].length);
  } else {
    auto in = load_inputs(cfg);
    query = std::move(in.query);
    const auto plan = partition_overlap(in.series.size(), query.size(), cfg.fragments);
    if (f.worker_id >= plan.size()) { throw config_error("--worker-id out of range"); }
    start = plan[f.worker_id].start;
    const auto first = in.series.values.begin() + static_cast<std::ptrdiff_t>(start - 1);
    fragment.values.assign(first, first + static_cast<std::ptrdiff_t>(plan[f.worker_id].length));
  }
  const auto params = make_params(cfg, query.size());

  tcp::TcpReducer reducer(endpoint, cfg.timeout);
  const auto report =
      run_worker(fragment.view(), FragmentInfo{f.worker_id, start}, query.view(), params, reducer, cfg.rounds_per_reduction);
  if (cfg.output == OutputFormat::json) {
    nlohmann::ordered_json j;
    j["worker"] = report.worker;
    j["index"] = report.final.index;
    j["distance_squared"] = report.final.distance;
    j["rows"] = report.local.rows;
    j["dtw_evals"] = report.local.dtw_evals;
    j["reductions"] = report.reductions;
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "worker " << report.worker << ": best match index " << report.final.index << " distance "
              << report.final.distance << " (" << report.local.dtw_evals << " DTW evaluations over "
              << report.local.rows << " rows, " << report.reductions << " reductions)\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Best-match subsequence search under the banded DTW distance.\n"
               "Every --flag can also be set through a DTWMATCH_<FLAG> environment variable "
               "(dashes become underscores), e.g. DTWMATCH_THREADS=4."};
  app.require_subcommand(1);
  Flags f;

  auto* search = app.add_subcommand("search", "find the best match of the query in the series");
  add_search_flags(search, f);

  auto* verify = app.add_subcommand("verify", "cross-check brute force, UCR, local and distributed search");
  add_search_flags(verify, f);
  verify->add_flag("--inject-fault", f.inject_fault, "test hook: hide the true best row from the lower bounds");

  auto* bench = app.add_subcommand("bench", "sweep threads, radius and query length; CSV on stdout");
  add_search_flags(bench, f);
  std::string p_list = "1,2,4,8", r_list = "0.1n,0.5n,n", n_list = "128", csv_path;
  std::size_t repeats = 1;
  bench->add_option("--sweep-threads", p_list, "comma-separated thread counts")->capture_default_str();
  bench->add_option("--sweep-r", r_list, "comma-separated radii")->capture_default_str();
  bench->add_option("--sweep-n", n_list, "comma-separated query lengths")->capture_default_str();
  bench->add_option("--repeats", repeats, "runs per cell; the fastest is kept")->capture_default_str();
  bench->add_option("--csv", csv_path, "write the table here instead of stdout");

  auto* generate = app.add_subcommand("generate", "write a random-walk series");
  std::size_t gen_length = 10'000;
  std::uint64_t gen_seed = 42;
  std::string gen_stream = "series", gen_out, gen_format;
  generate->add_option("--length", gen_length, "number of values")->capture_default_str();
  generate->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  generate->add_option("--stream", gen_stream, "series | query")->check(CLI::IsMember({"series", "query"}));
  generate->add_option("--out", gen_out, "output path")->required();
  generate->add_option("--format", gen_format, "raw-f64-le | csv | text");

  auto* partition = app.add_subcommand("partition", "print the fragment manifest");
  add_input_flags(partition, f);
  add(partition, "fragments", f.fragments, "fragment count F");

  auto* worker = app.add_subcommand("worker", "search one fragment and join a TCP coordinator");
  add_search_flags(worker, f);
  add(worker, "coordinator", f.coordinator, "coordinator address HOST:PORT")->required();
  add(worker, "worker-id", f.worker_id, "fragment id in [0, F)");

  auto* coordinate = app.add_subcommand("coordinate", "host the reductions for F workers");
  std::uint64_t coord_timeout = 30'000;
  std::string coord_output = "human";
  add(coordinate, "listen", f.listen, "listen address HOST:PORT (port 0 picks one)");
  add(coordinate, "fragments", f.fragments, "number of workers");
  coordinate->add_option("--timeout-ms", coord_timeout, "per-round timeout")->capture_default_str();
  coordinate->add_option("--output", coord_output, "human | json")->check(CLI::IsMember({"human", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e);
    return kExitConfig;
  }

  try {
    if (*search) { return cmd_search(f); }
    if (*verify) { return cmd_verify(f); }
    if (*bench) { return cmd_bench(f, p_list, r_list, n_list, repeats, csv_path); }
    if (*generate) { return cmd_generate(gen_length, gen_seed, gen_stream, gen_out, gen_format); }
    if (*partition) { return cmd_partition(f); }
    if (*worker) { return cmd_worker(f); }
    if (*coordinate) { return cmd_coordinate(f.listen, f.fragments, coord_timeout, coord_output); }
  } catch (const transport_error& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kExitTransport;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
