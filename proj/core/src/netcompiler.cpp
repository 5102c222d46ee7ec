#include "fabricsim/netcompiler.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <set>

namespace fabricsim {

namespace {

using SourcePair = std::pair<std::uint8_t, std::uint16_t>;  // (node, chip label)

struct PairInfo {
  SourcePair key;
  // Destination label per receiver this pair actually targets.
  std::map<std::uint8_t, std::uint16_t> targets;
  std::uint16_t routed_mask = 0;  // receivers its source node is routed to
};

// Two pairs may share a fabric label only if every receiver where both
// are visible demands the same translation (same destination label, or
// both filtered).
bool compatible(const PairInfo& a, const PairInfo& b) {
  std::uint16_t common = a.routed_mask & b.routed_mask;
  while (common) {
    const int r = std::countr_zero(static_cast<unsigned>(common));
    common &= static_cast<std::uint16_t>(common - 1);
    const auto ai = a.targets.find(static_cast<std::uint8_t>(r));
    const auto bi = b.targets.find(static_cast<std::uint8_t>(r));
    const bool a_maps = ai != a.targets.end();
    const bool b_maps = bi != b.targets.end();
    if (a_maps != b_maps) return false;
    if (a_maps && ai->second != bi->second) return false;
  }
  return true;
}

}  // namespace

CompileResult compile(std::span<const LogicalConnection> connections, std::uint8_t node_count) {
  CompileResult result;
  if (node_count == 0 || node_count > kMaxNodes) {
    result.error.reason = InfeasibilityReport::Reason::kNamespaceExhausted;
    result.error.message = "node count must be in [1, 16]";
    return result;
  }

  std::set<LogicalConnection> unique;
  for (const LogicalConnection& c : connections) {
    if (c.src_node.index() >= node_count || c.dst_node.index() >= node_count) {
      result.error.reason = InfeasibilityReport::Reason::kNamespaceExhausted;
      result.error.conflicts.push_back(c);
      result.error.message = "connection references a node beyond the configured count";
      return result;
    }
    unique.insert(c);
  }

  // Group by source pair; a pair needing two different labels at one
  // receiver can never be expressed through a single fabric label.
  std::map<SourcePair, PairInfo> pairs;
  std::array<std::uint16_t, kMaxNodes> routed{};
  for (const LogicalConnection& c : unique) {
    const SourcePair key{c.src_node.index(), c.src_label.value()};
    PairInfo& info = pairs[key];
    info.key = key;
    const auto [it, inserted] = info.targets.emplace(c.dst_node.index(), c.dst_label.value());
    if (!inserted && it->second != c.dst_label.value()) {
      result.error.reason = InfeasibilityReport::Reason::kConflictingFanout;
      result.error.message = "one source label cannot map to two labels at one receiver";
      for (const LogicalConnection& k : unique) {
        if (k.src_node == c.src_node && k.src_label == c.src_label &&
            k.dst_node == c.dst_node) {
          result.error.conflicts.push_back(k);
        }
      }
      return result;
    }
    routed[c.src_node.index()] |= static_cast<std::uint16_t>(1u << c.dst_node.index());
  }
  for (auto& [key, info] : pairs) {
    info.routed_mask = routed[key.first];
  }

  // Greedy least-free-label assignment in deterministic (node, label)
  // order; the label space is 2^15 so exhaustion needs a pathological
  // conflict graph, but it is reported rather than assumed away.
  std::vector<std::vector<const PairInfo*>> by_label;
  std::map<SourcePair, std::uint16_t> assignment;
  for (const auto& [key, info] : pairs) {
    std::uint32_t chosen = FabricLabel::kLimit;
    for (std::uint32_t f = 0; f < FabricLabel::kLimit; ++f) {
      if (f >= by_label.size()) {
        chosen = f;
        break;
      }
      bool ok = true;
      for (const PairInfo* other : by_label[f]) {
        if (!compatible(info, *other)) {
          ok = false;
          break;
        }
      }
      if (ok) {
        chosen = f;
        break;
      }
    }
    if (chosen >= FabricLabel::kLimit) {
      result.error.reason = InfeasibilityReport::Reason::kNamespaceExhausted;
      result.error.message = "no fabric label satisfies the sharing constraints";
      for (const LogicalConnection& c : unique) {
        if (c.src_node.index() == key.first && c.src_label.value() == key.second) {
          result.error.conflicts.push_back(c);
        }
      }
      return result;
    }
    if (chosen >= by_label.size()) by_label.resize(chosen + 1);
    by_label[chosen].push_back(&info);
    assignment[key] = static_cast<std::uint16_t>(chosen);
  }

  FabricProgram program;
  program.node_count = node_count;
  program.outbound.resize(node_count);
  program.inbound.resize(node_count);
  program.routes = RouteMatrix{node_count};

  for (const auto& [key, fabric] : assignment) {
    const PairInfo& info = pairs.at(key);
    program.outbound[key.first].set(ChipLabel{key.second}, FabricLabel{fabric});
    program.assignments.push_back(
        LabelAssignment{NodeId{key.first}, ChipLabel{key.second}, FabricLabel{fabric}});
    for (const auto& [receiver, dst_label] : info.targets) {
      program.inbound[receiver].set(FabricLabel{fabric}, ChipLabel{dst_label});
      program.routes.set(NodeId{key.first}, NodeId{receiver}, true);
    }
  }

  result.program = std::move(program);
  return result;
}

std::vector<SymbolicDelivery> symbolic_deliveries(const FabricProgram& program) {
  std::vector<SymbolicDelivery> out;
  for (std::uint8_t s = 0; s < program.node_count; ++s) {
    const OutboundLut& lut = program.outbound[s];
    for (std::uint32_t a = 0; a < OutboundLut::kEntries; ++a) {
      const std::uint16_t raw = lut.raw(a);
      if ((raw & OutboundLut::kEnableBit) == 0) continue;
      const FabricLabel f{static_cast<std::uint32_t>(raw & 0x7FFF)};
      for (std::uint8_t r = 0; r < program.node_count; ++r) {
        if (!program.routes.enabled(NodeId{s}, NodeId{r})) continue;
        if (!program.inbound[r].enabled(f)) continue;
        out.push_back(SymbolicDelivery{NodeId{s}, ChipLabel{a}, NodeId{r},
                                       program.inbound[r].target(f)});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

VerifyReport verify(const FabricProgram& program,
                    std::span<const LogicalConnection> connections) {
  VerifyReport report;

  const std::vector<SymbolicDelivery> delivered = symbolic_deliveries(program);
  std::set<LogicalConnection> expected(connections.begin(), connections.end());

  // Index deliveries by (src node, src label, dst node); the compiler
  // model yields at most one label per key.
  std::map<std::tuple<std::uint8_t, std::uint16_t, std::uint8_t>, std::uint16_t> actual;
  for (const SymbolicDelivery& d : delivered) {
    actual[{d.src_node.index(), d.src_label.value(), d.dst_node.index()}] =
        d.dst_label.value();
  }

  std::set<std::tuple<std::uint8_t, std::uint16_t, std::uint8_t>> claimed;
  for (const LogicalConnection& c : expected) {
    const auto key = std::make_tuple(c.src_node.index(), c.src_label.value(),
                                     c.dst_node.index());
    claimed.insert(key);
    const auto it = actual.find(key);
    if (it == actual.end()) {
      report.missing.push_back(c);
    } else if (it->second != c.dst_label.value()) {
      report.mislabeled.push_back(VerifyReport::Mislabeled{c, ChipLabel{it->second}});
    }
  }
  for (const SymbolicDelivery& d : delivered) {
    const auto key = std::make_tuple(d.src_node.index(), d.src_label.value(),
                                     d.dst_node.index());
    if (!claimed.contains(key)) {
      report.spurious.push_back(d);
    }
  }
  return report;
}

}  // namespace fabricsim
