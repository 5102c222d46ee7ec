#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fabricsim/aggregator.hpp"
#include "fabricsim/node.hpp"
#include "fabricsim/types.hpp"

// Routing-table compiler. Turns a logical connectivity description into
// per-node lookup tables plus the aggregator route-enable matrix.
//
// The binding constraint: a receiver's inbound table is keyed on the
// 15-bit fabric label alone and is shared by every source routed to that
// receiver. Two labels visible at a common receiver may share a fabric
// label only if they demand the same translation there (including "both
// filtered"). Each (source node, chip label) pair gets exactly one
// fabric label.

namespace fabricsim {

struct LogicalConnection {
  NodeId src_node;
  ChipLabel src_label;
  NodeId dst_node;
  ChipLabel dst_label;

  constexpr auto operator<=>(const LogicalConnection&) const = default;
};

struct LabelAssignment {
  NodeId node;
  ChipLabel chip_label;
  FabricLabel fabric_label;

  constexpr auto operator<=>(const LabelAssignment&) const = default;
};

struct FabricProgram {
  std::uint8_t node_count = 0;
  std::vector<OutboundLut> outbound;  // one per node
  std::vector<InboundLut> inbound;    // one per node
  RouteMatrix routes;
  std::vector<LabelAssignment> assignments;

  bool operator==(const FabricProgram&) const = default;
};

struct InfeasibilityReport {
  enum class Reason : std::uint8_t {
    kNone,
    kConflictingFanout,    // one source label needs two translations at one receiver
    kNamespaceExhausted,   // no fabric label satisfies the sharing constraints
  };

  Reason reason = Reason::kNone;
  std::vector<LogicalConnection> conflicts;
  std::string message;
};

struct CompileResult {
  std::optional<FabricProgram> program;
  InfeasibilityReport error;

  bool ok() const { return program.has_value(); }
};

/// Compiles a connection list for a fabric of node_count lanes.
/// Deterministic: equal inputs produce byte-identical programs.
CompileResult compile(std::span<const LogicalConnection> connections, std::uint8_t node_count);

struct SymbolicDelivery {
  NodeId src_node;
  ChipLabel src_label;
  NodeId dst_node;
  ChipLabel dst_label;

  constexpr auto operator<=>(const SymbolicDelivery&) const = default;
};

struct VerifyReport {
  struct Mislabeled {
    LogicalConnection expected;
    ChipLabel actual;

    constexpr auto operator<=>(const Mislabeled&) const = default;
  };

  std::vector<LogicalConnection> missing;
  std::vector<SymbolicDelivery> spurious;
  std::vector<Mislabeled> mislabeled;

  bool empty() const { return missing.empty() && spurious.empty() && mislabeled.empty(); }
};

/// Symbolic (untimed) evaluation of a program against the logical
/// connectivity: pushes every enabled source label through the tables
/// and the route matrix and diffs the realized delivery set.
VerifyReport verify(const FabricProgram& program, std::span<const LogicalConnection> connections);

/// The realized delivery set itself, sorted; useful as an oracle.
std::vector<SymbolicDelivery> symbolic_deliveries(const FabricProgram& program);

}  // namespace fabricsim
