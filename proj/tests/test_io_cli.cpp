#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dtwmatch/app.hpp"
#include "oracles.hpp"

using namespace dtwmatch;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("dtwmatch-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(file(name), std::ios::binary) << text; }

private:
  static inline int counter_ = 0;
  fs::path path_;
};

RunConfig small_config() {
  RunConfig cfg;
  cfg.length = 3000;
  cfg.n = 64;
  cfg.radius = RadiusSpec::fraction(0.25);
  cfg.seed = 7;
  return cfg;
}

} // namespace

TEST(SeriesIo, TextLines) {
  TempDir dir;
  dir.write("a.txt", "1\n2\n3\n");
  EXPECT_EQ(load_series(dir.file("a.txt"), SeriesFormat::text).values, (std::vector<double>{1, 2, 3}));
  dir.write("b.txt", "# header\n  1.5 -2e3\n\n+4\r\n");
  EXPECT_EQ(load_series(dir.file("b.txt"), SeriesFormat::text).values, (std::vector<double>{1.5, -2000, 4}));
  EXPECT_NO_THROW((void)load_series(dir.file("a.txt"), SeriesFormat::text, 3));
  EXPECT_THROW((void)load_series(dir.file("a.txt"), SeriesFormat::text, 4), config_error);
}

TEST(SeriesIo, ErrorsNameTheLocation) {
  TempDir dir;
  dir.write("bad.csv", "1,2\n3,x4\n");
  try {
    (void)load_series(dir.file("bad.csv"), SeriesFormat::csv);
    FAIL() << "expected an error";
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2, column 2"), std::string::npos) << e.what();
  }
  dir.write("nan.txt", "1\nnan\n");
  try {
    (void)load_series(dir.file("nan.txt"), SeriesFormat::text);
    FAIL() << "expected an error";
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  dir.write("inf.txt", "inf\n");
  EXPECT_THROW((void)load_series(dir.file("inf.txt"), SeriesFormat::text), config_error);
  dir.write("short.bin", "1234567");
  EXPECT_THROW((void)load_series(dir.file("short.bin"), SeriesFormat::raw_f64_le), config_error);
  EXPECT_THROW((void)load_series(dir.file("missing.txt"), SeriesFormat::text), config_error);
}

TEST(SeriesIo, RoundTripEveryFormat) {
  TempDir dir;
  auto values = gen_random_walk(1000, 3);
  values.push_back(1e-310);
  values.push_back(-0.0);
  values.push_back(0.1);
  for (auto format : {SeriesFormat::raw_f64_le, SeriesFormat::csv, SeriesFormat::text}) {
    const auto path = dir.file(std::string("s.") + to_string(format));
    save_series(path, values, format);
    const auto back = load_series(path, format);
    ASSERT_EQ(back.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[i]), std::bit_cast<std::uint64_t>(values[i]));
    }
  }
}

TEST(SeriesIo, RawSliceAndLittleEndian) {
  TempDir dir;
  const std::vector<double> values{1.0, 2.0, 3.0, 4.0, 5.0};
  save_series(dir.file("s.bin"), values, SeriesFormat::raw_f64_le);
  std::ifstream in(dir.file("s.bin"), std::ios::binary);
  unsigned char first[8];
  in.read(reinterpret_cast<char*>(first), 8);
  EXPECT_EQ(first[7], 0x3f);
  EXPECT_EQ(first[6], 0xf0);
  EXPECT_EQ(load_raw_slice(dir.file("s.bin"), 1, 3).values, (std::vector<double>{2, 3, 4}));
  EXPECT_THROW((void)load_raw_slice(dir.file("s.bin"), 3, 3), config_error);
}

TEST(SeriesIo, FormatNames) {
  EXPECT_EQ(parse_format("raw-f64-le"), SeriesFormat::raw_f64_le);
  EXPECT_EQ(parse_format("csv"), SeriesFormat::csv);
  EXPECT_EQ(parse_format("text"), SeriesFormat::text);
  EXPECT_THROW((void)parse_format("xml"), config_error);
  EXPECT_EQ(infer_format("x.bin"), SeriesFormat::raw_f64_le);
  EXPECT_EQ(infer_format("x.csv"), SeriesFormat::csv);
  EXPECT_EQ(infer_format("x.dat"), SeriesFormat::text);
}

TEST(RandomWalk, DeterministicAndSeedSensitive) {
  EXPECT_EQ(gen_random_walk(500, 42), gen_random_walk(500, 42));
  EXPECT_NE(gen_random_walk(500, 42), gen_random_walk(500, 43));
  EXPECT_NE(gen_random_walk(500, 42, streams::series), gen_random_walk(500, 42, streams::query));
  EXPECT_EQ(gen_random_walk(1, 5).size(), 1u);
  EXPECT_THROW((void)gen_random_walk(0, 5), std::invalid_argument);
}

TEST(RandomWalk, IncrementsAreStandardNormal) {
  const auto walk = gen_random_walk(100'000, 2024);
  const std::size_t m = walk.size();
  long double sum = walk[0];
  for (std::size_t i = 1; i < m; ++i) { sum += walk[i] - walk[i - 1]; }
  const long double mean = sum / m;
  long double ss = (walk[0] - mean) * (walk[0] - mean);
  for (std::size_t i = 1; i < m; ++i) {
    const long double g = walk[i] - walk[i - 1];
    ss += (g - mean) * (g - mean);
  }
  const long double variance = ss / (m - 1);
  EXPECT_LT(std::abs(static_cast<double>(mean)), 0.02);
  EXPECT_LT(std::abs(static_cast<double>(variance) - 1.0), 0.05);
}

TEST(RandomStreams, UniformBelowStaysInRange) {
  auto rng = make_rng(1, 2);
  for (int i = 0; i < 10'000; ++i) { EXPECT_LT(uniform_below(rng, 7), 7u); }
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(RadiusSpec, ParseAndResolve) {
  EXPECT_EQ(RadiusSpec::parse("16").resolve(128), 16u);
  EXPECT_EQ(RadiusSpec::parse("0.5n").resolve(128), 64u);
  EXPECT_EQ(RadiusSpec::parse("0.1n").resolve(128), 13u);  // round(12.8)
  EXPECT_EQ(RadiusSpec::parse("0.1n").resolve(64), 6u);    // round(6.4)
  EXPECT_EQ(RadiusSpec::parse("n").resolve(100), 100u);
  EXPECT_EQ(RadiusSpec::parse("0.25xn").resolve(10), 3u);  // round(2.5) away from zero
  EXPECT_EQ(RadiusSpec::parse("0").resolve(5), 0u);
  EXPECT_THROW((void)RadiusSpec::parse("1.5n"), config_error);
  EXPECT_THROW((void)RadiusSpec::parse("-3"), config_error);
  EXPECT_THROW((void)RadiusSpec::parse("2.5"), config_error);
  EXPECT_THROW((void)RadiusSpec::parse("abc"), config_error);
  EXPECT_THROW((void)RadiusSpec::parse("200").resolve(100), config_error);
}

TEST(RadiusSpec, FractionAndAbsoluteRunsAgree) {
  auto a = small_config();
  a.radius = RadiusSpec::fraction(0.25);
  auto b = small_config();
  b.radius = RadiusSpec::cells(16);
  auto ja = to_json(run_search(a));
  auto jb = to_json(run_search(b));
  ja.erase("wall_ms");
  jb.erase("wall_ms");
  EXPECT_EQ(ja.dump(), jb.dump());
}

TEST(Cascade, Parse) {
  EXPECT_EQ(parse_cascade("kim,ec,eq"), kDefaultCascade);
  EXPECT_EQ(parse_cascade("eq,kim_fl,keogh_ec"),
            (CascadeOrder{LowerBound::keogh_eq, LowerBound::kim_fl, LowerBound::keogh_ec}));
  EXPECT_THROW((void)parse_cascade("kim,kim,eq"), config_error);
  EXPECT_THROW((void)parse_cascade("kim,ec"), config_error);
  EXPECT_THROW((void)parse_cascade("kim,ec,eq,kim"), config_error);
}

TEST(Search, JsonSchema) {
  const auto j = to_json(run_search(small_config()));
  for (const char* key : {"index", "distance_squared", "n", "r", "fragments", "threads", "dtw_evals", "wall_ms"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const auto parsed = nlohmann::json::parse(j.dump());
  EXPECT_EQ(parsed["n"], 64);
  EXPECT_EQ(parsed["r"], 16);
}

TEST(Search, GoldenReport) {
  auto j = to_json(run_search(small_config()));
  j.erase("wall_ms");
  std::ifstream in(std::string(DTWMATCH_TEST_DATA_DIR) + "/golden_search_report.json");
  ASSERT_TRUE(in) << "golden file missing";
  const auto golden = nlohmann::ordered_json::parse(in);
  EXPECT_EQ(j.dump(2), golden.dump(2));
  const auto in_data = load_inputs(small_config());
  EXPECT_EQ(golden["index"].get<std::uint64_t>(),
            brute_force_search(in_data.series.view(), in_data.query.view(), BandRadius{16}).index);
}

TEST(Search, PlantedQueryAt777) {
  auto series = gen_random_walk(5000, 31);
  const auto query = gen_random_walk(128, 31, streams::query);
  std::copy(query.begin(), query.end(), series.begin() + 776);
  TempDir dir;
  save_series(dir.file("series.bin"), series, SeriesFormat::raw_f64_le);
  save_series(dir.file("query.txt"), query, SeriesFormat::text);
  RunConfig cfg;
  cfg.series_path = dir.file("series.bin");
  cfg.query_path = dir.file("query.txt");
  cfg.threads = 2;
  for (std::size_t f : {1u, 4u}) {
    cfg.fragments = f;
    const auto rep = run_search(cfg);
    EXPECT_EQ(rep.best.index, 777u);
    EXPECT_NEAR(rep.best.distance, 0.0, 1e-18);
    EXPECT_EQ(rep.n, 128u);
    EXPECT_EQ(rep.r, 64u);
  }
}

TEST(Search, SameValuesAnyFormat) {
  const auto series = gen_random_walk(2000, 32);
  const auto query = gen_random_walk(40, 32, streams::query);
  TempDir dir;
  std::optional<MatchResult> first;
  for (auto format : {SeriesFormat::raw_f64_le, SeriesFormat::csv, SeriesFormat::text}) {
    const std::string ext = to_string(format);
    save_series(dir.file("s." + ext), series, format);
    save_series(dir.file("q." + ext), query, format);
    RunConfig cfg;
    cfg.series_path = dir.file("s." + ext);
    cfg.query_path = dir.file("q." + ext);
    cfg.format = format;
    const auto best = run_search(cfg).best;
    if (!first) { first = best; }
    EXPECT_EQ(best, *first);
  }
}

TEST(Search, InputValidation) {
  RunConfig cfg;
  cfg.length = 50;
  cfg.n = 64;
  EXPECT_THROW((void)run_search(cfg), config_error);
  EXPECT_THROW((void)run_verify(cfg), config_error);
  cfg = small_config();
  cfg.threads = 0;
  EXPECT_THROW((void)run_search(cfg), config_error);
  cfg = small_config();
  cfg.fragments = 5000;
  EXPECT_THROW((void)run_search(cfg), config_error);
}

TEST(Verify, AgreesAndDetectsFault) {
  auto cfg = small_config();
  cfg.threads = 2;
  const auto ok = run_verify(cfg);
  EXPECT_TRUE(ok.agree);
  EXPECT_EQ(ok.fragments, 4u);
  cfg.inject_fault = true;
  const auto bad = run_verify(cfg);
  EXPECT_FALSE(bad.agree);
  EXPECT_EQ(bad.brute_force, ok.brute_force);
  EXPECT_EQ(bad.ucr, ok.ucr);
}

TEST(Verify, SameMatchTolerance) {
  EXPECT_TRUE(same_match({1.0, 3}, {1.0 + 1e-12, 3}));
  EXPECT_FALSE(same_match({1.0, 3}, {1.0 + 1e-6, 3}));
  EXPECT_FALSE(same_match({1.0, 3}, {1.0, 4}));
  EXPECT_TRUE(same_match({0.0, 3}, {0.0, 3}));
}

TEST(Bench, TableShapeAndDefinitions) {
  auto cfg = small_config();
  BenchSweep sweep;
  sweep.threads = {1, 2};
  sweep.radii = {RadiusSpec::fraction(0.1), RadiusSpec::fraction(0.5), RadiusSpec::fraction(1.0)};
  sweep.lengths = {64};
  const auto table = run_bench(cfg, sweep);
  ASSERT_EQ(table.size(), 6u);
  for (const auto& row : table) {
    if (row.threads == 1) {
      EXPECT_DOUBLE_EQ(row.speedup, 1.0);
      EXPECT_DOUBLE_EQ(row.efficiency, 1.0);
    } else {
      EXPECT_DOUBLE_EQ(row.efficiency, row.speedup / 2.0);
    }
  }
  const auto csv = bench_csv(table);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "n,r,threads,wall_ms,speedup,efficiency,dtw_evals,rows,pruning_ratio,index,distance_squared");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Bench, DtwWorkGrowsWithRadius) {
  auto cfg = small_config();
  cfg.length = 20'000;
  cfg.threads = 1;
  BenchSweep sweep;
  sweep.threads = {1};
  sweep.radii = {RadiusSpec::fraction(0.1), RadiusSpec::fraction(0.5), RadiusSpec::fraction(1.0)};
  sweep.lengths = {128};
  const auto a = run_bench(cfg, sweep);
  const auto b = run_bench(cfg, sweep);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) { EXPECT_EQ(a[i].dtw_evals, b[i].dtw_evals); }
  EXPECT_LE(a[0].dtw_evals, a[1].dtw_evals);
  EXPECT_LE(a[1].dtw_evals, a[2].dtw_evals);
}
