// Acceptance suite: every run criterion of the simulator, one test per
// criterion, each printing a PASS/FAIL line with its threshold pinned in
// code. The latency criteria share one full-size fan-in sweep.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "fabricsim/codec.hpp"
#include "fabricsim/config_io.hpp"
#include "fabricsim/engine.hpp"
#include "fabricsim/harness.hpp"

namespace fabricsim {
namespace {

class Acceptance : public ::testing::Test {
 protected:
  void Criterion(int number, std::string description) {
    number_ = number;
    description_ = std::move(description);
  }
  void TearDown() override {
    std::printf("[CRITERION %2d] %s - %s\n", number_, HasFailure() ? "FAIL" : "PASS",
                description_.c_str());
    std::fflush(stdout);
  }

 private:
  int number_ = 0;
  std::string description_;
};

// ---------------------------------------------------------------------------
// Shared fixtures

struct Fig4Sweep {
  SweepResult result;
  double wall_seconds = 0.0;
};

const Fig4Sweep& fig4_sweep() {
  static const Fig4Sweep sweep = [] {
    SweepSpec spec;
    spec.fan_in = 3;
    spec.rates_mhz = {1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 62.5, 83.3, 125.0};
    spec.spikes_per_point = 1u << 15;
    const auto t0 = std::chrono::steady_clock::now();
    Fig4Sweep out;
    out.result = latency_sweep(spec);
    out.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    return out;
  }();
  return sweep;
}

std::vector<const RatePoint*> sub_saturation_points() {
  std::vector<const RatePoint*> out;
  for (const RatePoint& p : fig4_sweep().result.points) {
    if (!p.saturated) out.push_back(&p);
  }
  return out;
}

LogicalConnection conn(std::uint32_t sn, std::uint32_t sl, std::uint32_t dn,
                       std::uint32_t dl) {
  return LogicalConnection{NodeId{sn}, ChipLabel{sl}, NodeId{dn}, ChipLabel{dl}};
}

SimConfig fan_in_config(std::uint32_t fan_in, Tick period, std::uint64_t spikes_per_sender) {
  SimConfig config;
  config.node_count = static_cast<std::uint8_t>(fan_in + 1);
  std::vector<LogicalConnection> connections;
  for (std::uint32_t s = 1; s <= fan_in; ++s) {
    connections.push_back(conn(s, 16 + s, 0, 512 + s));
  }
  CompileResult compiled = compile(connections, config.node_count);
  config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
  config.connectivity = std::move(connections);
  config.sources.resize(config.node_count);
  for (std::uint32_t s = 1; s <= fan_in; ++s) {
    config.sources[s].push_back(
        SourceSpec{ChipLabel{16 + s}, period, spikes_per_sender, 2 * (s - 1)});
  }
  return config;
}

// ---------------------------------------------------------------------------
// 1. Latency band reproduction

TEST_F(Acceptance, C01_LatencyBandReproduction) {
  Criterion(1,
            "3:1 sweep medians within [0.9, 1.3] us at every sub-saturation "
            "rate, sweep wall time < 60 s");
  const Fig4Sweep& sweep = fig4_sweep();
  ASSERT_FALSE(sweep.result.points.empty());
  ASSERT_TRUE(sweep.result.saturation_index.has_value())
      << "the swept rates must reach saturation";

  const auto sub = sub_saturation_points();
  ASSERT_GE(sub.size(), 5u);
  for (const RatePoint* p : sub) {
    ASSERT_GT(p->latency.count, 0u);
    EXPECT_GE(p->latency.p50_ns, 900u) << p->realized_mhz << " MHz";
    EXPECT_LE(p->latency.p50_ns, 1300u) << p->realized_mhz << " MHz";
  }
  EXPECT_LT(sweep.wall_seconds, 60.0);
}

// ---------------------------------------------------------------------------
// 2. Link-hop budget

TEST_F(Acceptance, C02_LinkHopBudget) {
  Criterion(2,
            "path delay attributes 2 x 37 MGT cycles = 296 ns to the link "
            "hops (within 8 ns of 0.3 us); analytic equals simulated exactly");
  SimConfig config;
  config.node_count = 2;
  CompileResult compiled = compile({{conn(1, 5, 0, 300)}}, 2);
  config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
  config.sources.resize(2);
  config.sources[1].push_back(SourceSpec{ChipLabel{5}, 100, 1, 0});

  const PathDelayBreakdown analytic = Engine::path_delay(config, NodeId{1}, NodeId{0});
  EXPECT_EQ(analytic.mgt_hops(), 2u * 37u);
  EXPECT_EQ(analytic.mgt_hops() * kTickNs, 296u);
  EXPECT_LE(std::abs(static_cast<long>(analytic.mgt_hops() * kTickNs) - 300L), 8L);

  const RunReport report = run(config);
  ASSERT_EQ(report.latency.count, 1u);
  const TraceRecord& r = report.trace[0][0];
  EXPECT_EQ(r.arrived_at.ticks - r.emitted_at.ticks, analytic.total());  // tolerance 0
}

// ---------------------------------------------------------------------------
// 3. Jitter bound

TEST_F(Acceptance, C03_JitterBound) {
  Criterion(3, "(p99 - p1)/p50 <= 0.20 in the worst sub-saturation regime");
  double worst = 0.0;
  for (const RatePoint* p : sub_saturation_points()) {
    ASSERT_GT(p->latency.count, 0u);
    const double jitter = static_cast<double>(p->latency.p99_ns - p->latency.p1_ns) /
                          static_cast<double>(p->latency.p50_ns);
    worst = std::max(worst, jitter);
  }
  EXPECT_LE(worst, 0.20);
}

// ---------------------------------------------------------------------------
// 4. Bandwidth independence below saturation

TEST_F(Acceptance, C04_BandwidthIndependence) {
  Criterion(4, "sub-saturation p50 spread <= 5 bins of 8 ns");
  std::uint64_t lo = ~0ull, hi = 0;
  for (const RatePoint* p : sub_saturation_points()) {
    lo = std::min(lo, p->latency.p50_ns);
    hi = std::max(hi, p->latency.p50_ns);
  }
  EXPECT_LE(hi - lo, 5u * kSystemCycleNs);
}

// ---------------------------------------------------------------------------
// 5. Barrier skew, timeout and refractory

TEST_F(Acceptance, C05_BarrierSynchronization) {
  Criterion(5,
            "starts within one system cycle for 2-16 nodes and random "
            "request offsets; timeout without fire; refractory holds");
  const auto t0 = std::chrono::steady_clock::now();

  // State-machine level: the fire cycle is exactly the latest request.
  std::mt19937 rng(0xACCE5);
  for (std::uint32_t n = 2; n <= 16; ++n) {
    const std::uint16_t participants = static_cast<std::uint16_t>((1u << n) - 1);
    for (int trial = 0; trial < 30; ++trial) {
      std::uniform_int_distribution<std::uint64_t> offset(0, 400);
      std::map<std::uint64_t, std::uint16_t> requests;
      std::uint64_t latest = 0;
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint64_t at = offset(rng);
        requests[at] |= static_cast<std::uint16_t>(1u << i);
        latest = std::max(latest, at);
      }
      BarrierFsm fsm(BarrierParams{participants, 10000, 8});
      std::optional<std::uint64_t> fired;
      for (std::uint64_t cycle = 0; cycle <= latest; ++cycle) {
        const auto it = requests.find(cycle);
        if (fsm.step(cycle, it == requests.end() ? 0 : it->second).fired) fired = cycle;
      }
      ASSERT_TRUE(fired.has_value()) << n << " nodes, trial " << trial;
      ASSERT_EQ(*fired, latest);
    }
  }

  // Whole-engine level: randomized uplink offsets, every start on the
  // same edge (and within one cycle under 0/1 skew).
  for (const std::uint8_t n : {2, 9, 16}) {
    SimConfig config;
    config.node_count = n;
    CompileResult compiled = compile({}, n);
    config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
    config.lanes.resize(n);
    for (std::uint8_t i = 0; i < n; ++i) {
      config.lanes[i].mgt_up = LinkParams{37 + (rng() % 64), 5000, 2};
    }
    config.barrier.skew.assign(n, 0);
    for (std::uint8_t i = 0; i < n; i += 2) config.barrier.skew[i] = 1;

    const RunReport report = run(config);
    ASSERT_TRUE(report.sync_fired) << unsigned{n} << " nodes";
    Tick lo = ~0ull, hi = 0;
    for (const auto& s : report.rt_start) {
      ASSERT_TRUE(s.has_value());
      lo = std::min(lo, *s);
      hi = std::max(hi, *s);
    }
    EXPECT_LE(hi - lo, Tick{kTicksPerSystemCycle}) << unsigned{n} << " nodes";
  }

  // Missing node: timeout flagged, nobody starts.
  const BarrierTestResult missing =
      barrier_test(BarrierScenario::kMissingNode, 4, Calibration{});
  EXPECT_FALSE(missing.fired);
  EXPECT_TRUE(missing.timed_out);
  for (const auto& s : missing.starts) EXPECT_FALSE(s.has_value());

  // Refractory suppresses re-entry until it expires.
  BarrierFsm fsm(BarrierParams{0b11, 1000, 10});
  ASSERT_TRUE(fsm.step(0, 0b11).fired);
  (void)fsm.step(4, 0b11);
  EXPECT_EQ(fsm.state(), BarrierFsm::State::kRefractory);
  EXPECT_GT(fsm.ignored_requests(), 0u);
  (void)fsm.step(11, 0b11);
  EXPECT_TRUE(fsm.fired_cycle().has_value());

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(elapsed, 5.0);
}

// ---------------------------------------------------------------------------
// 6. Lane throughput

TEST_F(Acceptance, C06_SustainedThroughput) {
  Criterion(6,
            "saturated MGT lane sustains (1 - cc_length/cc_interval) x 250 "
            "Mevent/s within 1% over 2e6 words");
  const Calibration cal;
  const ThroughputResult r = throughput_bench(BenchLane::kMgt, cal, 2'000'000);
  ASSERT_GE(r.events, 1'000'000u);
  EXPECT_NEAR(r.events_per_second, r.expected_events_per_second,
              0.01 * r.expected_events_per_second);
  EXPECT_NEAR(r.expected_events_per_second, 249.9e6, 1e3);
}

// ---------------------------------------------------------------------------
// 7. Compiler oracle equivalence

std::vector<LogicalConnection> random_topology(std::mt19937& rng) {
  std::uniform_int_distribution<std::uint32_t> node(0, 3);
  std::uniform_int_distribution<std::uint32_t> label(0, 0xFFFF);
  std::uniform_int_distribution<int> edges(1, 64);
  std::vector<LogicalConnection> out;
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> keys;
  const int n = edges(rng);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t sn = node(rng);
    const std::uint32_t sl = label(rng);
    const std::uint32_t dn = node(rng);
    if (!keys.insert({sn, sl, dn}).second) continue;
    out.push_back(conn(sn, sl, dn, label(rng)));
  }
  return out;
}

TEST_F(Acceptance, C07_CompilerOracleEquivalence) {
  Criterion(7,
            "1000 random topologies: timed one-spike-per-label simulation "
            "matches the logical connectivity; verify() empty; single-bit "
            "mutations detected");
  std::mt19937 rng(0xFAB);
  int mutations_checked = 0;

  for (int topology = 0; topology < 1000; ++topology) {
    const std::vector<LogicalConnection> connections = random_topology(rng);
    const CompileResult compiled = compile(connections, 4);
    ASSERT_TRUE(compiled.ok()) << "topology " << topology;
    const FabricProgram& program = *compiled.program;
    ASSERT_TRUE(verify(program, connections).empty()) << "topology " << topology;

    // Timed simulation: one spike per distinct source label, spaced out
    // so no queue ever drops.
    SimConfig config;
    config.node_count = 4;
    config.program = compiled.program ? std::make_shared<const FabricProgram>(program)
                                      : nullptr;
    config.sources.resize(4);
    std::array<std::uint32_t, 4> per_node_index{};
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen_pairs;
    for (const LogicalConnection& c : connections) {
      const auto key = std::make_pair<std::uint32_t, std::uint32_t>(c.src_node.index(),
                                                                    c.src_label.value());
      if (!seen_pairs.insert(key).second) continue;
      config.sources[c.src_node.index()].push_back(SourceSpec{
          c.src_label, 1, 1, 16 * per_node_index[c.src_node.index()]++});
    }
    const RunReport report = run(config);
    ASSERT_EQ(report.ledger.total_drops(), 0u) << "topology " << topology;
    ASSERT_EQ(report.ledger.in_flight_at_end, 0u) << "topology " << topology;

    std::multiset<std::pair<std::uint8_t, std::uint16_t>> expected;
    for (const LogicalConnection& c : connections) {
      expected.insert({c.dst_node.index(), c.dst_label.value()});
    }
    std::multiset<std::pair<std::uint8_t, std::uint16_t>> delivered;
    for (std::uint8_t r = 0; r < 4; ++r) {
      for (const TraceRecord& t : report.trace[r]) {
        delivered.insert({r, t.label.value()});
      }
    }
    ASSERT_EQ(delivered, expected) << "topology " << topology;

    // Single-bit mutations. Enable and route flips on live entries must
    // always be detected; a label-bit flip is detected exactly when it
    // changes the realized delivery set.
    if (!connections.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, connections.size() - 1);
      const LogicalConnection& c = connections[pick(rng)];

      FabricProgram m1 = program;
      m1.outbound[c.src_node.index()].disable(c.src_label);
      ASSERT_FALSE(verify(m1, connections).empty()) << "outbound enable flip undetected";

      FabricProgram m2 = program;
      const FabricLabel f = program.outbound[c.src_node.index()].target(c.src_label);
      m2.inbound[c.dst_node.index()].disable(f);
      ASSERT_FALSE(verify(m2, connections).empty()) << "inbound enable flip undetected";

      FabricProgram m3 = program;
      m3.routes.set(c.src_node, c.dst_node, false);
      ASSERT_FALSE(verify(m3, connections).empty()) << "route bit flip undetected";

      FabricProgram m4 = program;
      const std::uint16_t flipped =
          m4.outbound[c.src_node.index()].raw(c.src_label.value()) ^
          static_cast<std::uint16_t>(1u << (rng() % 15));
      m4.outbound[c.src_node.index()].set_raw(c.src_label.value(), flipped);
      const bool delivery_changed =
          symbolic_deliveries(m4) != symbolic_deliveries(program);
      ASSERT_EQ(!verify(m4, connections).empty(), delivery_changed)
          << "label bit flip misclassified";
      mutations_checked += 4;
    }
  }
  EXPECT_GT(mutations_checked, 3000);
}

// ---------------------------------------------------------------------------
// 8. Codec suite

TEST_F(Acceptance, C08_CodecSuite) {
  Criterion(8,
            "frame/deframe bijective over 2^16 words; 8b10b round-trips all "
            "codes; run length <= 5 and bounded disparity on 1e5 streams");
  for (std::uint32_t wire = 0; wire < 0x10000; ++wire) {
    ASSERT_EQ(frame_mgt(deframe_mgt(static_cast<std::uint16_t>(wire))), wire);
  }

  for (const RunningDisparity rd :
       {RunningDisparity::kNegative, RunningDisparity::kPositive}) {
    for (unsigned b = 0; b < 256; ++b) {
      const Encoded8b10b enc = encode_8b10b(static_cast<std::uint8_t>(b), false, rd);
      const Decoded8b10b dec = decode_8b10b(enc.symbol, rd);
      ASSERT_EQ(dec.status, DecodeStatus::kOk);
      ASSERT_EQ(dec.byte, b);
    }
    int k_codes = 0;
    for (unsigned b = 0; b < 256; ++b) {
      if (!is_valid_control_byte(static_cast<std::uint8_t>(b))) continue;
      ++k_codes;
      const Encoded8b10b enc = encode_8b10b(static_cast<std::uint8_t>(b), true, rd);
      const Decoded8b10b dec = decode_8b10b(enc.symbol, rd);
      ASSERT_EQ(dec.status, DecodeStatus::kOk);
      ASSERT_EQ(dec.byte, b);
      ASSERT_TRUE(dec.is_control);
    }
    ASSERT_EQ(k_codes, 12);
  }

  std::mt19937 rng(88);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(1, 24);
  for (int stream = 0; stream < 100000; ++stream) {
    RunningDisparity rd =
        (stream & 1) ? RunningDisparity::kPositive : RunningDisparity::kNegative;
    int run = 0;
    int last = -1;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      const Encoded8b10b enc = encode_8b10b(static_cast<std::uint8_t>(byte(rng)), false, rd);
      rd = enc.rd;  // the type permits only -1 and +1: bounded by construction
      for (int b = 9; b >= 0; --b) {
        const int bit = (enc.symbol.bits >> b) & 1;
        run = (bit == last) ? run + 1 : 1;
        last = bit;
        ASSERT_LE(run, 5) << "stream " << stream;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 9. Conservation and determinism

TEST_F(Acceptance, C09_ConservationAndDeterminism) {
  Criterion(9,
            "generated = traced + dropped + in-flight on every run; "
            "repeated runs byte-identical");
  // Clean run, overloaded run, and a truncated run with events in flight.
  for (const Tick period : {50u, 2u}) {
    const SimConfig config = fan_in_config(3, period, 3000);
    const RunReport report = run(config);
    EXPECT_TRUE(report.ledger.balanced());
    EXPECT_EQ(report.ledger.generated, 9000u);
  }
  {
    SimConfig config = fan_in_config(2, 10, 100);
    config.run_cap_ticks = 900;
    const RunReport report = run(config);
    EXPECT_TRUE(report.hit_run_cap);
    EXPECT_GT(report.ledger.in_flight_at_end, 0u);
    EXPECT_TRUE(report.ledger.balanced());
  }

  const SimConfig config = fan_in_config(3, 4, 4000);
  const RunReport a = run(config);
  const RunReport b = run(config);
  SimConfig exact = config;
  exact.single_tick_stepping = true;
  const RunReport c = run(exact);
  EXPECT_EQ(serialize_run_summary(a), serialize_run_summary(b));
  EXPECT_EQ(serialize_run_summary(a), serialize_run_summary(c));
  ASSERT_EQ(a.trace, b.trace);
  ASSERT_EQ(a.trace, c.trace);
}

// ---------------------------------------------------------------------------
// 10. Congestion semantics

TEST_F(Acceptance, C10_CongestionSemantics) {
  Criterion(10,
            "overload drops monotonically at the 3:1 multiplexer and the "
            "chip egress; MGT-path queues back-pressure before loss");
  // 3:1 multiplexer overload.
  {
    SimConfig config = fan_in_config(3, 2, 4000);
    Engine engine(config);
    std::vector<std::uint64_t> agg_drops;
    engine.set_probe(256, [&](const ProbeSample& s) { agg_drops.push_back(s.agg_copy_drops); });
    const RunReport report = engine.run();

    ASSERT_GT(agg_drops.size(), 8u);
    for (std::size_t i = 1; i < agg_drops.size(); ++i) {
      ASSERT_GE(agg_drops[i], agg_drops[i - 1]);
    }
    EXPECT_GT(report.ledger.agg_copy_drops, 0u);

    // The MGT-path bounded queues held the overload without loss: their
    // occupancy rose, their drop counters did not.
    std::uint64_t egress_hwm = 0;
    std::uint64_t ingress_hwm = 0;
    for (const NodeCounters& c : report.node_counters) {
      EXPECT_EQ(c.node_egress_drops, 0u);
      EXPECT_EQ(c.node_ingress_drops, 0u);
      egress_hwm = std::max(egress_hwm, c.node_egress_high_water);
      ingress_hwm = std::max(ingress_hwm, c.node_ingress_high_water);
    }
    EXPECT_GT(egress_hwm, 0u);
    EXPECT_GT(ingress_hwm, 0u);
  }

  // Layer-1 chip egress overload: three sources per chip exceed the
  // 250 Mevent/s chip-link cap and the two-deep queue loses spikes.
  {
    SimConfig config;
    config.node_count = 2;
    CompileResult compiled =
        compile({{conn(1, 1, 0, 100), conn(1, 2, 0, 101), conn(1, 3, 0, 102)}}, 2);
    config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
    config.sources.resize(2);
    for (std::uint32_t label : {1u, 2u, 3u}) {
      config.sources[1].push_back(SourceSpec{ChipLabel{label}, 2, 2000, 0});
    }
    Engine engine(config);
    std::vector<std::uint64_t> chip_drops;
    engine.set_probe(256, [&](const ProbeSample& s) {
      chip_drops.push_back(s.chip_egress_drops);
    });
    const RunReport report = engine.run();
    ASSERT_GT(chip_drops.size(), 4u);
    for (std::size_t i = 1; i < chip_drops.size(); ++i) {
      ASSERT_GE(chip_drops[i], chip_drops[i - 1]);
    }
    EXPECT_GT(report.ledger.chip_egress_drops, 0u);
    EXPECT_TRUE(report.ledger.balanced());
  }
}

}  // namespace
}  // namespace fabricsim
