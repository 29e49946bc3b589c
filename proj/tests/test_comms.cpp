#include <gtest/gtest.h>

#include <random>
#include <thread>
#include <vector>

#include "dtwmatch/baseline_ucr.hpp"
#include "dtwmatch/comms.hpp"
#include "dtwmatch/distributed.hpp"
#include "dtwmatch/random.hpp"
#include "dtwmatch/tcp_transport.hpp"

using namespace dtwmatch;
using namespace std::chrono_literals;

namespace {

// Runs fn(worker, reducer) on one thread per worker over an in-process group.
template <class Fn>
void with_group(std::size_t workers, Fn fn, std::chrono::milliseconds timeout = 5000ms) {
  InProcessGroup group(workers, timeout);
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < workers; ++k) {
    threads.emplace_back([&, k] {
      auto reducer = group.endpoint(k);
      fn(k, *reducer);
    });
  }
  for (auto& t : threads) { t.join(); }
}

template <class Fn>
void with_tcp(std::size_t workers, Fn fn, MatchResult* coordinated = nullptr) {
  tcp::Coordinator coordinator(tcp::Endpoint{"127.0.0.1", 0}, workers, 5000ms);
  const tcp::Endpoint address{"127.0.0.1", coordinator.port()};
  std::thread server([&] {
    const auto best = coordinator.serve();
    if (coordinated) { *coordinated = best; }
  });
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < workers; ++k) {
    threads.emplace_back([&, k] {
      tcp::TcpReducer reducer(address, 5000ms);
      fn(k, reducer);
    });
  }
  for (auto& t : threads) { t.join(); }
  server.join();
}

SearchParams params_with(std::size_t r, std::size_t lanes = 1) {
  SearchParams p;
  p.radius = BandRadius{r};
  p.lanes = lanes;
  p.segment = 20;
  return p;
}

} // namespace

TEST(MatchResult, LexicographicOrder) {
  EXPECT_LT((MatchResult{3.0, 99}), (MatchResult{5.0, 10}));
  EXPECT_LT((MatchResult{3.0, 7}), (MatchResult{3.0, 99}));
  EXPECT_EQ(min_match(MatchResult{3.0, 99}, MatchResult{3.0, 7}), (MatchResult{3.0, 7}));
}

TEST(Champion, OfferKeepsLexicographicMinimum) {
  Champion c(MatchResult{4.0, 50});
  EXPECT_FALSE(c.offer(MatchResult{5.0, 1}));
  EXPECT_TRUE(c.offer(MatchResult{4.0, 20}));
  EXPECT_FALSE(c.offer(MatchResult{4.0, 30}));
  EXPECT_TRUE(c.offer(MatchResult{1.0, 90}));
  EXPECT_EQ(c.best(), (MatchResult{1.0, 90}));
  EXPECT_EQ(c.threshold(), 1.0);
}

TEST(InProcess, MinPairTieBreak) {
  const std::vector<MatchResult> input{{5.0, 10}, {3.0, 99}, {3.0, 7}};
  std::vector<MatchResult> got(3);
  with_group(3, [&](std::size_t k, Reducer& r) { got[k] = r.allreduce_min_pair(input[k]); });
  for (const auto& g : got) { EXPECT_EQ(g, (MatchResult{3.0, 7})); }
}

TEST(InProcess, SingleWorkerIsIdentity) {
  with_group(1, [](std::size_t, Reducer& r) {
    EXPECT_EQ(r.allreduce_min_pair(MatchResult{2.5, 4}), (MatchResult{2.5, 4}));
    EXPECT_FALSE(r.allreduce_and(false));
    EXPECT_TRUE(r.allreduce_and(true));
  });
}

TEST(InProcess, RandomRoundsMatchCentralOracle) {
  constexpr std::size_t kWorkers = 8;
  constexpr std::size_t kRounds = 200;
  std::mt19937_64 rng(5);
  std::vector<std::vector<MatchResult>> pairs(kRounds, std::vector<MatchResult>(kWorkers));
  std::vector<std::vector<bool>> flags(kRounds, std::vector<bool>(kWorkers));
  for (std::size_t r = 0; r < kRounds; ++r) {
    for (std::size_t k = 0; k < kWorkers; ++k) {
      pairs[r][k] = {static_cast<double>(rng() % 5), rng() % 7};
      flags[r][k] = rng() % 8 != 0;
    }
  }
  std::vector<std::vector<MatchResult>> got_pair(kRounds, std::vector<MatchResult>(kWorkers));
  std::vector<std::vector<int>> got_flag(kRounds, std::vector<int>(kWorkers));
  with_group(kWorkers, [&](std::size_t k, Reducer& red) {
    for (std::size_t r = 0; r < kRounds; ++r) {
      got_pair[r][k] = red.allreduce_min_pair(pairs[r][k]);
      got_flag[r][k] = red.allreduce_and(flags[r][k]);
    }
  });
  for (std::size_t r = 0; r < kRounds; ++r) {
    MatchResult expect = pairs[r][0];
    bool all = true;
    for (std::size_t k = 0; k < kWorkers; ++k) {
      if (pairs[r][k] < expect) { expect = pairs[r][k]; }
      all = all && flags[r][k];
    }
    for (std::size_t k = 0; k < kWorkers; ++k) {
      EXPECT_EQ(got_pair[r][k], expect);
      EXPECT_EQ(got_flag[r][k] != 0, all);
    }
  }
}

TEST(InProcess, TimeoutRaisesTransportError) {
  InProcessGroup group(2, 50ms);
  auto lonely = group.endpoint(0);
  EXPECT_THROW((void)lonely->allreduce_and(true), transport_error);
  EXPECT_THROW((void)group.endpoint(1)->allreduce_and(true), transport_error);
  EXPECT_THROW((void)group.endpoint(2), config_error);
}

TEST(InProcess, AbortWakesWaiters) {
  InProcessGroup group(3, 10s);
  std::thread waiter([&] { EXPECT_THROW((void)group.endpoint(0)->allreduce_min_pair({}), transport_error); });
  std::this_thread::sleep_for(20ms);
  group.abort("test");
  waiter.join();
}

TEST(Frames, RoundTrip) {
  const std::vector<tcp::Frame> frames{
      {tcp::FrameType::contrib_pair, 0, {3.25, 77}, false},
      {tcp::FrameType::result_pair, 12345, {kInfinity, 0}, false},
      {tcp::FrameType::contrib_flag, 9, {}, true},
      {tcp::FrameType::result_flag, 0xffffffffu, {}, false},
  };
  for (const auto& f : frames) { EXPECT_EQ(tcp::decode_frame(tcp::encode_frame(f)), f); }
}

TEST(Frames, ByteLayout) {
  const auto bytes = tcp::encode_frame({tcp::FrameType::contrib_pair, 2, {1.0, 258}, false});
  const std::vector<std::uint8_t> expected{
      21, 0, 0, 0,                                      // length of everything after the prefix
      0x01,                                             // type
      2, 0, 0, 0,                                       // round
      0, 0, 0, 0, 0, 0, 0xf0, 0x3f,                     // 1.0
      2, 1, 0, 0, 0, 0, 0, 0,                           // 258
  };
  EXPECT_EQ(bytes, expected);
  const auto flag = tcp::encode_frame({tcp::FrameType::result_flag, 1, {}, true});
  EXPECT_EQ(flag, (std::vector<std::uint8_t>{6, 0, 0, 0, 0x82, 1, 0, 0, 0, 1}));
}

TEST(Frames, MalformedInputRejected) {
  EXPECT_THROW((void)tcp::decode_frame(std::vector<std::uint8_t>{1, 0}), transport_error);
  EXPECT_THROW((void)tcp::decode_frame(std::vector<std::uint8_t>{6, 0, 0, 0, 0x33, 0, 0, 0, 0, 1}), transport_error);
  EXPECT_THROW((void)tcp::decode_frame(std::vector<std::uint8_t>{5, 0, 0, 0, 0x02, 0, 0, 0, 0}), transport_error);
}

TEST(Endpoint, Parse) {
  const auto ep = tcp::parse_endpoint("localhost:7000");
  EXPECT_EQ(ep.host, "localhost");
  EXPECT_EQ(ep.port, 7000);
  EXPECT_THROW((void)tcp::parse_endpoint("nohost"), config_error);
  EXPECT_THROW((void)tcp::parse_endpoint("h:99999"), config_error);
  EXPECT_THROW((void)tcp::parse_endpoint(":80"), config_error);
}

TEST(Tcp, ReductionsMatchOracle) {
  constexpr std::size_t kWorkers = 4;
  constexpr std::size_t kRounds = 30;
  std::mt19937_64 rng(9);
  std::vector<std::vector<MatchResult>> pairs(kRounds, std::vector<MatchResult>(kWorkers));
  for (auto& row : pairs) {
    for (auto& p : row) { p = {static_cast<double>(rng() % 4), rng() % 5}; }
  }
  std::vector<std::vector<MatchResult>> got(kRounds, std::vector<MatchResult>(kWorkers));
  MatchResult final_pair;
  with_tcp(
      kWorkers,
      [&](std::size_t k, Reducer& red) {
        for (std::size_t r = 0; r < kRounds; ++r) {
          got[r][k] = red.allreduce_min_pair(pairs[r][k]);
          const bool last = r + 1 == kRounds;
          EXPECT_EQ(red.allreduce_and(last || k != 2), last);
        }
      },
      &final_pair);
  for (std::size_t r = 0; r < kRounds; ++r) {
    MatchResult expect = pairs[r][0];
    for (const auto& p : pairs[r]) { expect = min_match(expect, p); }
    for (const auto& g : got[r]) { EXPECT_EQ(g, expect); }
  }
  EXPECT_EQ(final_pair, got.back()[0]);
}

TEST(Tcp, DroppedWorkerFailsTheRound) {
  tcp::Coordinator coordinator(tcp::Endpoint{"127.0.0.1", 0}, 2, 2000ms);
  const tcp::Endpoint address{"127.0.0.1", coordinator.port()};
  std::thread server([&] { EXPECT_THROW((void)coordinator.serve(), transport_error); });
  std::thread good([&] {
    tcp::TcpReducer reducer(address, 2000ms);
    EXPECT_THROW((void)reducer.allreduce_min_pair({1.0, 1}), transport_error);
  });
  {
    tcp::TcpReducer quitter(address, 2000ms);
    quitter.close();
  }
  good.join();
  server.join();
}

TEST(Worker, EarlyFinisherKeepsParticipating) {
  const auto series = gen_random_walk(3000, 11);
  const auto query = gen_random_walk(32, 11, streams::query);
  const auto params = params_with(8);
  // Worker 0 owns a single row; worker 1 owns the rest.
  const std::span<const double> all(series);
  const auto tiny = all.first(32);
  const auto rest = all.subspan(1);
  std::vector<WorkerReport> reports(2);
  with_group(2, [&](std::size_t k, Reducer& red) {
    reports[k] = k == 0 ? run_worker(tiny, FragmentInfo{0, 1}, query, params, red)
                        : run_worker(rest, FragmentInfo{1, 2}, query, params, red);
  });
  EXPECT_EQ(reports[0].reductions, reports[1].reductions);
  EXPECT_LT(reports[0].active_rounds, reports[1].active_rounds);
  EXPECT_EQ(reports[0].final, reports[1].final);
  EXPECT_EQ(reports[0].final, brute_force_search(series, query, BandRadius{8}));
  for (const auto& rep : reports) {
    for (std::size_t i = 1; i < rep.reduced_bsf.size(); ++i) { EXPECT_LE(rep.reduced_bsf[i], rep.reduced_bsf[i - 1]); }
  }
}

TEST(Distributed, InvariantAcrossFragmentsAndTransports) {
  const auto series = gen_random_walk(10'000, 12);
  const auto query = gen_random_walk(128, 12, streams::query);
  const auto params = params_with(13, 2);
  const auto reference = local_best_match(series, query, params);
  EXPECT_EQ(reference, brute_force_search(series, query, BandRadius{13}));
  for (auto transport : {Transport::in_process, Transport::tcp}) {
    for (std::size_t f : {1u, 2u, 4u}) {
      DistributedOptions opts;
      opts.fragments = f;
      opts.transport = transport;
      const auto out = run_distributed(series, query, params, opts);
      EXPECT_EQ(out.best, reference) << to_string(transport) << " F=" << f;
      EXPECT_EQ(out.rows(), series.size() - query.size() + 1);
      for (const auto& w : out.workers) { EXPECT_EQ(w.final, out.best); }
    }
  }
}

TEST(Distributed, RoundsPerReductionDoesNotChangeResult) {
  const auto series = gen_random_walk(4000, 13);
  const auto query = gen_random_walk(64, 13, streams::query);
  const auto params = params_with(16, 2);
  const auto reference = brute_force_search(series, query, BandRadius{16});
  for (std::size_t rpr : {1u, 3u, 50u}) {
    DistributedOptions opts;
    opts.fragments = 3;
    opts.rounds_per_reduction = rpr;
    EXPECT_EQ(run_distributed(series, query, params, opts).best, reference);
  }
}

TEST(Distributed, ConfigErrorsSurfaceOverTransportEchoes) {
  const auto series = gen_random_walk(4000, 14);
  const auto query = gen_random_walk(64, 14, streams::query);
  auto params = params_with(16, 1);
  params.memory_budget_bytes = 4096;
  for (auto transport : {Transport::in_process, Transport::tcp}) {
    DistributedOptions opts;
    opts.fragments = 3;
    opts.transport = transport;
    opts.timeout = 2000ms;
    EXPECT_THROW((void)run_distributed(series, query, params, opts), memory_budget_error);
  }
  DistributedOptions too_many;
  too_many.fragments = 5000;
  EXPECT_THROW((void)run_distributed(series, query, params_with(4), too_many), config_error);
}
