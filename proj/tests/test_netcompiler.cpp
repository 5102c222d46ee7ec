#include "fabricsim/netcompiler.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fabricsim/config_io.hpp"

namespace fabricsim {
namespace {

LogicalConnection conn(std::uint32_t sn, std::uint32_t sl, std::uint32_t dn,
                       std::uint32_t dl) {
  return LogicalConnection{NodeId{sn}, ChipLabel{sl}, NodeId{dn}, ChipLabel{dl}};
}

TEST(Compile, EmptyConnectionListDisablesEverything) {
  const CompileResult result = compile({}, 4);
  ASSERT_TRUE(result.ok());
  const FabricProgram& p = *result.program;
  EXPECT_EQ(p.node_count, 4);
  for (std::uint8_t s = 0; s < 4; ++s) {
    EXPECT_EQ(p.routes.row(s), 0);
    for (std::size_t i = 0; i < OutboundLut::kEntries; ++i) {
      EXPECT_EQ(p.outbound[s].raw(i), 0);
    }
  }
  EXPECT_TRUE(p.assignments.empty());
  EXPECT_TRUE(symbolic_deliveries(p).empty());
}

TEST(Compile, SingleConnection) {
  const std::vector<LogicalConnection> c{conn(0, 5, 1, 300)};
  const CompileResult result = compile(c, 2);
  ASSERT_TRUE(result.ok());
  const FabricProgram& p = *result.program;

  ASSERT_TRUE(p.outbound[0].enabled(ChipLabel{5}));
  const FabricLabel f = p.outbound[0].target(ChipLabel{5});
  ASSERT_TRUE(p.inbound[1].enabled(f));
  EXPECT_EQ(p.inbound[1].target(f).value(), 300);
  EXPECT_TRUE(p.routes.enabled(NodeId{0}, NodeId{1}));
  EXPECT_FALSE(p.routes.enabled(NodeId{1}, NodeId{0}));

  // Everything else stays dark.
  std::size_t enabled_out = 0;
  for (std::size_t i = 0; i < OutboundLut::kEntries; ++i) {
    if (p.outbound[0].raw(i) & OutboundLut::kEnableBit) ++enabled_out;
  }
  EXPECT_EQ(enabled_out, 1u);
  EXPECT_TRUE(verify(p, c).empty());
}

TEST(Compile, MulticastAndConvergence) {
  const std::vector<LogicalConnection> c{
      conn(0, 5, 1, 300), conn(0, 5, 2, 301),   // multicast, distinct labels per receiver
      conn(1, 9, 3, 77),  conn(2, 10, 3, 77),   // convergence on one label
  };
  const CompileResult result = compile(c, 4);
  ASSERT_TRUE(result.ok());
  EXPECT_TRUE(verify(*result.program, c).empty());
}

TEST(Compile, LoopbackConnection) {
  const std::vector<LogicalConnection> c{conn(1, 4, 1, 9)};
  const CompileResult result = compile(c, 2);
  ASSERT_TRUE(result.ok());
  EXPECT_TRUE(result.program->routes.enabled(NodeId{1}, NodeId{1}));
  EXPECT_TRUE(verify(*result.program, c).empty());
}

TEST(Compile, SharedReceiverForcesDistinctFabricLabels) {
  // Both sources feed node 2; their labels demand different translations
  // there, so they must not share a fabric label.
  const std::vector<LogicalConnection> c{
      conn(0, 5, 2, 100),
      conn(1, 5, 2, 200),
  };
  const CompileResult result = compile(c, 3);
  ASSERT_TRUE(result.ok());
  const FabricProgram& p = *result.program;
  EXPECT_NE(p.outbound[0].target(ChipLabel{5}).value(),
            p.outbound[1].target(ChipLabel{5}).value());
  EXPECT_TRUE(verify(p, c).empty());
}

TEST(Compile, SpuriousCrossTalkIsFilteredNotMisdelivered) {
  // Node 0 routes to both receivers because of label 5, so label 6's
  // fabric label is visible at node 2 as well and must be filtered there.
  const std::vector<LogicalConnection> c{
      conn(0, 5, 1, 100), conn(0, 5, 2, 101),
      conn(0, 6, 1, 102),
  };
  const CompileResult result = compile(c, 3);
  ASSERT_TRUE(result.ok());
  EXPECT_TRUE(verify(*result.program, c).empty());
}

TEST(Compile, ConflictingFanoutReported) {
  const std::vector<LogicalConnection> c{
      conn(0, 5, 1, 100),
      conn(0, 5, 1, 200),  // same source label, same receiver, new label
  };
  const CompileResult result = compile(c, 2);
  ASSERT_FALSE(result.ok());
  EXPECT_EQ(result.error.reason, InfeasibilityReport::Reason::kConflictingFanout);
  EXPECT_EQ(result.error.conflicts.size(), 2u);
}

TEST(Compile, NodeBeyondCountRejected) {
  const std::vector<LogicalConnection> c{conn(0, 5, 3, 100)};
  const CompileResult result = compile(c, 2);
  ASSERT_FALSE(result.ok());
}

TEST(Compile, DeterministicBytes) {
  const std::vector<LogicalConnection> c{
      conn(0, 5, 1, 300), conn(1, 9, 3, 77), conn(2, 10, 3, 77), conn(0, 6, 2, 1),
  };
  const CompileResult a = compile(c, 4);
  // Same connections in a different order.
  std::vector<LogicalConnection> shuffled{c[2], c[0], c[3], c[1]};
  const CompileResult b = compile(shuffled, 4);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(serialize_fabric_program(*a.program), serialize_fabric_program(*b.program));
}

TEST(Verify, DetectsSingleMissingAfterEnableFlip) {
  const std::vector<LogicalConnection> c{conn(0, 5, 1, 300)};
  CompileResult result = compile(c, 2);
  ASSERT_TRUE(result.ok());
  FabricProgram p = *result.program;
  p.outbound[0].disable(ChipLabel{5});

  const VerifyReport report = verify(p, c);
  ASSERT_EQ(report.missing.size(), 1u);
  EXPECT_EQ(report.missing[0], c[0]);
  EXPECT_TRUE(report.spurious.empty());
  EXPECT_TRUE(report.mislabeled.empty());
}

TEST(Verify, DetectsSpuriousAfterExtraInboundEnable) {
  const std::vector<LogicalConnection> c{conn(0, 5, 1, 300)};
  CompileResult result = compile(c, 2);
  ASSERT_TRUE(result.ok());
  FabricProgram p = *result.program;
  const FabricLabel used = p.outbound[0].target(ChipLabel{5});
  // Enable the same fabric label at the other receiver and open the route.
  p.inbound[0].set(used, ChipLabel{999});
  p.routes.set(NodeId{0}, NodeId{0}, true);

  const VerifyReport report = verify(p, c);
  EXPECT_TRUE(report.missing.empty());
  ASSERT_EQ(report.spurious.size(), 1u);
  EXPECT_EQ(report.spurious[0].dst_label.value(), 999);
}

TEST(Verify, DetectsMislabeledInboundEntry) {
  const std::vector<LogicalConnection> c{conn(0, 5, 1, 300)};
  CompileResult result = compile(c, 2);
  ASSERT_TRUE(result.ok());
  FabricProgram p = *result.program;
  const FabricLabel used = p.outbound[0].target(ChipLabel{5});
  p.inbound[1].set(used, ChipLabel{301});

  const VerifyReport report = verify(p, c);
  ASSERT_EQ(report.mislabeled.size(), 1u);
  EXPECT_EQ(report.mislabeled[0].actual.value(), 301);
}

// ---------------------------------------------------------------------------
// Random-graph properties

std::vector<LogicalConnection> random_connections(std::mt19937& rng, int node_count,
                                                  int max_edges) {
  std::uniform_int_distribution<std::uint32_t> node(0, node_count - 1);
  std::uniform_int_distribution<std::uint32_t> label(0, 0xFFFF);
  std::uniform_int_distribution<int> edges(0, max_edges);
  std::vector<LogicalConnection> out;
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> used_keys;
  const int n = edges(rng);
  for (int i = 0; i < n; ++i) {
    const std::uint32_t sn = node(rng);
    const std::uint32_t sl = label(rng);
    const std::uint32_t dn = node(rng);
    // One translation per (source pair, receiver): skip duplicate keys so
    // the graph stays feasible by construction.
    if (!used_keys.insert({sn, sl, dn}).second) continue;
    out.push_back(conn(sn, sl, dn, label(rng)));
  }
  return out;
}

TEST(CompileProperty, CompileThenVerifyEmptyOnRandomGraphs) {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    const auto connections = random_connections(rng, 4, 64);
    const CompileResult result = compile(connections, 4);
    ASSERT_TRUE(result.ok()) << "trial " << trial;
    EXPECT_TRUE(verify(*result.program, connections).empty()) << "trial " << trial;
  }
}

TEST(CompileProperty, FeasibilityMonotoneUnderSubsets) {
  std::mt19937 rng(777);
  for (int trial = 0; trial < 50; ++trial) {
    const auto connections = random_connections(rng, 4, 48);
    ASSERT_TRUE(compile(connections, 4).ok());
    std::vector<LogicalConnection> subset;
    for (const LogicalConnection& c : connections) {
      if (rng() % 2) subset.push_back(c);
    }
    const CompileResult sub = compile(subset, 4);
    ASSERT_TRUE(sub.ok()) << "trial " << trial;
    EXPECT_TRUE(verify(*sub.program, subset).empty());
  }
}

}  // namespace
}  // namespace fabricsim
