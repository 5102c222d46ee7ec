#include "fabricsim/aggregator.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <vector>

namespace fabricsim {
namespace {

// ---------------------------------------------------------------------------
// Barrier state machine

TEST(BarrierStateMachine, FiresWhenLastParticipantRequests) {
  BarrierFsm fsm(BarrierParams{0b111, 1000, 16});
  bool fired = false;
  for (std::uint64_t cycle = 0; cycle < 40 && !fired; ++cycle) {
    std::uint16_t req = 0;
    if (cycle == 10) req = 0b001;
    if (cycle == 12) req = 0b010;
    if (cycle == 14) req = 0b100;
    const auto result = fsm.step(cycle, req);
    fired = result.fired;
    if (fired) {
      EXPECT_EQ(cycle, 14u);
    }
  }
  EXPECT_TRUE(fired);
  EXPECT_EQ(fsm.fired_cycle().value(), 14u);
  EXPECT_EQ(fsm.timeout_count(), 0u);
}

TEST(BarrierStateMachine, AllAtOnceFiresImmediately) {
  BarrierFsm fsm(BarrierParams{0b11, 1000, 16});
  const auto result = fsm.step(5, 0b11);
  EXPECT_TRUE(result.fired);
  EXPECT_EQ(fsm.fired_cycle().value(), 5u);
}

TEST(BarrierStateMachine, MissingNodeTimesOutWithoutFire) {
  BarrierFsm fsm(BarrierParams{0b111, 1000, 16});
  bool timed_out = false;
  std::uint64_t timeout_cycle = 0;
  for (std::uint64_t cycle = 0; cycle < 2000 && !timed_out; ++cycle) {
    std::uint16_t req = 0;
    if (cycle == 7) req = 0b011;  // node 2 never requests
    const auto result = fsm.step(cycle, req);
    EXPECT_FALSE(result.fired);
    timed_out = result.timed_out;
    timeout_cycle = cycle;
  }
  EXPECT_TRUE(timed_out);
  EXPECT_EQ(timeout_cycle, 7u + 1000u);  // first request + timeout
  EXPECT_FALSE(fsm.fired_cycle().has_value());
  EXPECT_EQ(fsm.timeout_count(), 1u);
}

TEST(BarrierStateMachine, StragglerAtTheDeadlineStillFires) {
  BarrierFsm fsm(BarrierParams{0b11, 100, 16});
  (void)fsm.step(0, 0b01);
  for (std::uint64_t cycle = 1; cycle < 100; ++cycle) {
    const auto r = fsm.step(cycle, 0);
    ASSERT_FALSE(r.fired);
    ASSERT_FALSE(r.timed_out);
  }
  const auto result = fsm.step(100, 0b10);  // arrives exactly at the deadline
  EXPECT_TRUE(result.fired);
  EXPECT_FALSE(result.timed_out);
}

TEST(BarrierStateMachine, RefractorySuppressesReentry) {
  BarrierFsm fsm(BarrierParams{0b11, 1000, 10});
  (void)fsm.step(0, 0b11);  // fire at 0, refractory through cycle 10
  EXPECT_EQ(fsm.state(), BarrierFsm::State::kRefractory);

  const auto during = fsm.step(5, 0b01);
  EXPECT_FALSE(during.fired);
  EXPECT_EQ(fsm.state(), BarrierFsm::State::kRefractory);
  EXPECT_EQ(fsm.ignored_requests(), 1u);

  // After the refractory window a new collection opens.
  const auto after = fsm.step(11, 0b01);
  EXPECT_FALSE(after.fired);
  EXPECT_EQ(fsm.state(), BarrierFsm::State::kCollecting);
  const auto complete = fsm.step(12, 0b10);
  EXPECT_TRUE(complete.fired);
}

TEST(BarrierStateMachine, NonParticipantCountedAndIgnored) {
  BarrierFsm fsm(BarrierParams{0b011, 1000, 16});
  (void)fsm.step(0, 0b100);  // lane 2 is not a participant
  EXPECT_EQ(fsm.state(), BarrierFsm::State::kIdle);
  EXPECT_EQ(fsm.ignored_requests(), 1u);
}

TEST(BarrierStateMachine, DuplicateRequestsIdempotent) {
  BarrierFsm fsm(BarrierParams{0b11, 1000, 16});
  (void)fsm.step(0, 0b01);
  (void)fsm.step(1, 0b01);
  (void)fsm.step(2, 0b01);
  EXPECT_EQ(fsm.state(), BarrierFsm::State::kCollecting);
  EXPECT_EQ(fsm.ignored_requests(), 0u);
  EXPECT_TRUE(fsm.step(3, 0b10).fired);
}

TEST(BarrierStateMachine, RejectsEmptyParticipants) {
  EXPECT_THROW(BarrierFsm(BarrierParams{0, 100, 10}), std::invalid_argument);
}

// Fire time is a pure function of request arrival times: replaying the
// same offsets gives the same fire cycle, equal to the latest arrival.
TEST(BarrierStateMachine, FireCycleEqualsLatestArrival) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 15);
    const std::uint16_t participants = static_cast<std::uint16_t>((1u << n) - 1);
    std::uniform_int_distribution<std::uint64_t> offset(0, 500);
    std::map<std::uint64_t, std::uint16_t> requests;
    std::uint64_t latest = 0;
    for (int i = 0; i < n; ++i) {
      const std::uint64_t at = offset(rng);
      requests[at] |= static_cast<std::uint16_t>(1u << i);
      latest = std::max(latest, at);
    }
    BarrierFsm fsm(BarrierParams{participants, 10000, 4});
    std::optional<std::uint64_t> fired;
    for (std::uint64_t cycle = 0; cycle <= latest; ++cycle) {
      const auto it = requests.find(cycle);
      const auto r = fsm.step(cycle, it == requests.end() ? 0 : it->second);
      if (r.fired) fired = cycle;
    }
    ASSERT_TRUE(fired.has_value());
    EXPECT_EQ(*fired, latest);
  }
}

// ---------------------------------------------------------------------------
// Routing

struct AggHarness {
  AggHarness(std::uint8_t n, RouteMatrix routes, AggregatorParams params = {9, 16})
      : node_count(n),
        agg(routes, BarrierParams{static_cast<std::uint16_t>((1u << n) - 1), 100000, 16},
            params) {
    for (std::uint8_t i = 0; i < n; ++i) {
      lanes_in.emplace_back(LinkParams{1, 0, 2});
      lanes_out.emplace_back(LinkParams{1, 0, 2});
    }
  }

  void inject(Tick when, std::uint8_t lane, std::uint32_t label) {
    ASSERT_TRUE(lanes_in[lane].try_send(
        MgtFlit{MgtWord::event(FabricLabel{label}), EventMeta{when, lane, true}}, when));
  }

  void inject_command(Tick when, std::uint8_t lane, CommandCode code) {
    ASSERT_TRUE(
        lanes_in[lane].try_send(MgtFlit{MgtWord::command(code), EventMeta{}}, when));
  }

  struct Delivery {
    Tick tick;
    std::uint8_t lane;
    std::uint16_t payload;
    std::uint8_t src;
  };

  std::vector<Delivery> run(Tick until) {
    std::vector<Delivery> out;
    for (Tick t = 0; t <= until; ++t) {
      agg.step(t, lanes_in, lanes_out);
      for (std::uint8_t o = 0; o < node_count; ++o) {
        while (auto flit = lanes_out[o].poll(t)) {
          EXPECT_TRUE(flit->word.is_event()) << "command leaked to an output lane";
          out.push_back(Delivery{t, o, flit->word.payload, flit->meta.src_node});
        }
      }
    }
    return out;
  }

  std::uint8_t node_count;
  Aggregator agg;
  std::vector<SerialLink<MgtFlit>> lanes_in;
  std::vector<SerialLink<MgtFlit>> lanes_out;
};

RouteMatrix full_mesh(std::uint8_t n) {
  RouteMatrix m(n);
  for (std::uint8_t s = 0; s < n; ++s) {
    for (std::uint8_t d = 0; d < n; ++d) m.set(NodeId{s}, NodeId{d}, true);
  }
  return m;
}

TEST(AggregatorRouting, AllFalseMatrixDeliversNothing) {
  AggHarness h(4, RouteMatrix{4});
  h.inject(0, 0, 5);
  h.inject(0, 1, 6);
  const auto out = h.run(100);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(h.agg.unrouted(), 2u);
  EXPECT_EQ(h.agg.copies_routed(), 0u);
}

TEST(AggregatorRouting, BroadcastReachesEveryEnabledLaneSameCycle) {
  RouteMatrix routes(4);
  for (std::uint8_t d : {0, 1, 3}) routes.set(NodeId{0}, NodeId{d}, true);
  AggHarness h(4, routes);
  h.inject(0, 0, 7);
  const auto out = h.run(100);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& d : out) {
    EXPECT_EQ(d.tick, out[0].tick);  // same relative cycle on every lane
    EXPECT_EQ(d.payload, 7);
  }
  EXPECT_EQ(h.agg.copies_routed(), 3u);
  EXPECT_EQ(h.agg.copies_sent(), 3u);
}

TEST(AggregatorRouting, ThreeToOneContentionSpreadsOverConsecutiveCycles) {
  RouteMatrix routes(4);
  for (std::uint8_t s : {1, 2, 3}) routes.set(NodeId{s}, NodeId{0}, true);
  AggHarness h(4, routes);
  h.inject(0, 1, 11);
  h.inject(0, 2, 12);
  h.inject(0, 3, 13);
  const auto out = h.run(100);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[1].tick, out[0].tick + 1);
  EXPECT_EQ(out[2].tick, out[0].tick + 2);
}

TEST(AggregatorRouting, PerPairOrderPreserved) {
  AggHarness h(2, full_mesh(2));
  for (Tick t = 0; t < 8; ++t) h.inject(t, 0, static_cast<std::uint32_t>(100 + t));
  const auto out = h.run(100);
  std::vector<std::uint16_t> to_lane1;
  for (const auto& d : out) {
    if (d.lane == 1) to_lane1.push_back(d.payload);
  }
  ASSERT_EQ(to_lane1.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(to_lane1[i], 100 + i);
}

TEST(AggregatorRouting, RoundRobinRotatesAmongContenders) {
  RouteMatrix routes(3);
  routes.set(NodeId{0}, NodeId{2}, true);
  routes.set(NodeId{1}, NodeId{2}, true);
  AggHarness h(3, routes);
  // Two inputs contend for lane 2 on every cycle.
  for (Tick t = 0; t < 6; ++t) {
    h.inject(t, 0, 100);
    h.inject(t, 1, 200);
  }
  const auto out = h.run(100);
  ASSERT_EQ(out.size(), 12u);
  // The first served source alternates between the contenders.
  std::vector<std::uint8_t> srcs;
  for (const auto& d : out) srcs.push_back(d.src);
  bool saw_0_first = false;
  bool saw_1_first = false;
  for (std::size_t i = 0; i + 1 < srcs.size(); i += 2) {
    if (srcs[i] == 0) saw_0_first = true;
    if (srcs[i] == 1) saw_1_first = true;
  }
  EXPECT_TRUE(saw_0_first);
  EXPECT_TRUE(saw_1_first);
}

TEST(AggregatorRouting, OverflowDropsAreCounted) {
  RouteMatrix routes(4);
  for (std::uint8_t s : {1, 2, 3}) routes.set(NodeId{s}, NodeId{0}, true);
  AggHarness h(4, routes, AggregatorParams{9, 4});  // shallow queue
  for (Tick t = 0; t < 40; ++t) {
    h.inject(t, 1, 1);
    h.inject(t, 2, 2);
    h.inject(t, 3, 3);
  }
  const auto out = h.run(300);
  EXPECT_GT(h.agg.copy_drops(), 0u);
  EXPECT_EQ(h.agg.copies_routed(), 120u);
  EXPECT_EQ(out.size() + h.agg.copy_drops(), h.agg.copies_routed());
  EXPECT_EQ(h.agg.copies_sent(), out.size());
}

TEST(AggregatorRouting, CommandsAreStrippedNotRouted) {
  AggHarness h(2, full_mesh(2));
  h.inject_command(0, 0, CommandCode::noop());
  h.inject_command(2, 0, CommandCode::barrier_request());
  const auto out = h.run(50);
  EXPECT_TRUE(out.empty());  // run() asserts no command ever leaves
  EXPECT_EQ(h.agg.commands_in(), 2u);
  EXPECT_EQ(h.agg.events_in(), 0u);
}

TEST(AggregatorRouting, SelfLoopViaFabricAllowed) {
  RouteMatrix routes(2);
  routes.set(NodeId{0}, NodeId{0}, true);
  AggHarness h(2, routes);
  h.inject(0, 0, 9);
  const auto out = h.run(50);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].lane, 0);
}

TEST(AggregatorRouting, ScalesToSixteenLanes) {
  AggHarness h(16, full_mesh(16));
  for (std::uint8_t lane = 0; lane < 16; ++lane) h.inject(0, lane, lane);
  const auto out = h.run(300);
  EXPECT_EQ(out.size(), 16u * 16u);
  EXPECT_EQ(h.agg.copies_routed(), 256u);
  // A second wave behaves identically.
  for (std::uint8_t lane = 0; lane < 16; ++lane) h.inject(600, lane, 100u + lane);
  const auto out2 = h.run(900);
  EXPECT_EQ(out2.size(), 256u);
}

TEST(AggregatorSync, PulseLatchedOnSystemEdge) {
  AggHarness h(2, full_mesh(2));
  h.inject_command(0, 0, CommandCode::barrier_request());
  h.inject_command(1, 1, CommandCode::barrier_request());
  // Requests arrive at ticks 1 and 2; the system edge at tick 2 sees
  // both and fires.
  bool fired = false;
  for (Tick t = 0; t <= 10 && !fired; ++t) {
    h.agg.step(t, h.lanes_in, h.lanes_out);
    fired = h.agg.sync_pulse();
    if (fired) {
      EXPECT_EQ(t, 2u);
    }
  }
  EXPECT_TRUE(fired);
  EXPECT_EQ(h.agg.sync_fire_tick().value(), 2u);
}

}  // namespace
}  // namespace fabricsim
