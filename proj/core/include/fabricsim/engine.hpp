#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fabricsim/aggregator.hpp"
#include "fabricsim/chip.hpp"
#include "fabricsim/link.hpp"
#include "fabricsim/netcompiler.hpp"
#include "fabricsim/node.hpp"
#include "fabricsim/types.hpp"

// Deterministic cycle-driven kernel. All components advance on the 4 ns
// base tick in a fixed global order:
//
//   sources -> chip links -> node outbound -> MGT links -> aggregator
//     -> MGT links -> node inbound -> chip links -> jitter buffer -> trace
//
// System-domain stages act on even ticks only. The order is part of the
// observable contract: contention resolution is reproducible, and two
// runs of one config produce byte-identical reports.

namespace fabricsim {

/// Timing and sizing defaults for every pipeline stage, individually
/// overridable via set(). Defaults target the measured behavior of the
/// reference platform; see docs/calibration.md.
struct Calibration {
  Tick mgt_latency_ticks = 37;        // per hop: 148 ns, two hops 296 ns
  Tick chip_link_latency_ticks = 62;  // per direction: 248 ns
  std::uint64_t mgt_cc_interval = 5000;
  std::uint32_t mgt_cc_length = 2;
  std::uint64_t chip_cc_interval = 0;  // chip link carries no CC pauses
  std::uint32_t chip_cc_length = 2;

  std::uint32_t agg_pipeline_cycles = 9;  // MGT cycles
  std::uint32_t agg_queue_depth = 16;

  NodeParams node;

  std::uint32_t chip_egress_depth = 2;
  std::uint32_t chip_burst = 3;
  std::uint32_t chip_refill_per_cycle = 2;
  std::uint32_t jitter_depth = 16;
  // Empty = per-topology analytic zero-contention delay.
  std::optional<std::uint32_t> jitter_expected_cycles;

  /// Applies "key=value" style overrides. Returns false for unknown keys.
  bool set(const std::string& key, const std::string& value);
  /// Known override keys, for CLI help and error messages.
  static std::vector<std::string> known_keys();
};

struct BarrierConfig {
  std::optional<std::uint16_t> participants;  // lane mask; default: all nodes
  std::uint32_t timeout_cycles = 125000;
  std::uint32_t refractory_cycles = 64;
  std::vector<std::uint8_t> skew;  // per-node sync skew in {0,1} system cycles
};

/// Per-lane parameter overrides; unset lanes use the calibration.
struct LaneOverrides {
  std::optional<LinkParams> chip_up;
  std::optional<LinkParams> chip_down;
  std::optional<LinkParams> mgt_up;
  std::optional<LinkParams> mgt_down;
};

struct SimConfig {
  std::uint8_t node_count = 2;
  Tick run_cap_ticks = 500'000'000;
  std::uint64_t seed = 0;  // reserved; the model is fully deterministic

  Calibration cal;
  std::shared_ptr<const FabricProgram> program;
  std::vector<std::vector<SourceSpec>> sources;  // per node
  std::vector<PlaybackProgram> playback;         // per node; empty = barrier-only
  BarrierConfig barrier;
  std::vector<LaneOverrides> lanes;              // per node, optional
  std::vector<std::optional<NodeParams>> node_overrides;

  // Logical connectivity for pre-run verification, when available.
  std::vector<LogicalConnection> connectivity;

  // File provenance, kept so configs re-serialize faithfully.
  std::string program_file;
  std::string connectivity_file;

  // Step every tick instead of skipping provably idle spans. Results are
  // identical either way; this exists so tests can assert exactly that.
  bool single_tick_stepping = false;
};

/// Node-pair path delay split by pipeline stage, all in ticks.
struct PathDelayBreakdown {
  Tick chip_link_up = 0;
  Tick cdc_out = 0;
  Tick lut_out = 0;
  Tick mgt_up = 0;
  Tick aggregator = 0;
  Tick mgt_down = 0;
  Tick lut_in = 0;
  Tick pack_align = 0;  // wait for the next system edge
  Tick pack_and_cdc_in = 0;
  Tick chip_link_down = 0;
  Tick jitter_hold = 0;

  Tick mgt_hops() const { return mgt_up + mgt_down; }
  Tick total() const {
    return chip_link_up + cdc_out + lut_out + mgt_up + aggregator + mgt_down + lut_in +
           pack_align + pack_and_cdc_in + chip_link_down + jitter_hold;
  }
};

struct LaneStats {
  std::string name;
  std::uint64_t accepted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t cc_pauses = 0;

  auto operator<=>(const LaneStats&) const = default;
};

/// Event-conservation ledger. Every generated event ends in exactly one
/// bucket; aggregator fan-out adds copy_surplus to the left-hand side:
///   generated + playback + copy_surplus =
///     traced + drops + filters + unrouted + post_section + in_flight
struct EventLedger {
  std::uint64_t generated = 0;
  std::uint64_t playback_injected = 0;
  std::uint64_t copy_surplus = 0;
  std::uint64_t traced = 0;
  std::uint64_t chip_egress_drops = 0;
  std::uint64_t out_filtered = 0;
  std::uint64_t node_egress_drops = 0;
  std::uint64_t agg_unrouted = 0;
  std::uint64_t agg_copy_drops = 0;
  std::uint64_t in_filtered = 0;
  std::uint64_t node_ingress_drops = 0;
  std::uint64_t post_section = 0;
  std::uint64_t in_flight_at_end = 0;

  std::uint64_t sources() const { return generated + playback_injected + copy_surplus; }
  std::uint64_t sinks() const {
    return traced + chip_egress_drops + out_filtered + node_egress_drops + agg_unrouted +
           agg_copy_drops + in_filtered + node_ingress_drops + post_section + in_flight_at_end;
  }
  bool balanced() const { return sources() == sinks(); }
  std::uint64_t total_drops() const {
    return chip_egress_drops + node_egress_drops + agg_copy_drops + node_ingress_drops;
  }
};

struct NodeCounters {
  std::uint64_t generated = 0;
  std::uint64_t chip_egress_drops = 0;
  std::uint64_t tapped = 0;
  std::uint64_t out_filtered = 0;
  std::uint64_t node_egress_drops = 0;
  std::uint64_t in_filtered = 0;
  std::uint64_t node_ingress_drops = 0;
  std::uint64_t jitter_misses = 0;
  std::uint64_t traced = 0;
  std::uint64_t node_egress_high_water = 0;
  std::uint64_t node_ingress_high_water = 0;

  auto operator<=>(const NodeCounters&) const = default;
};

struct LatencyStats {
  std::uint64_t count = 0;
  std::uint64_t p1_ns = 0;
  std::uint64_t p50_ns = 0;
  std::uint64_t p99_ns = 0;
  std::uint64_t max_ns = 0;

  auto operator<=>(const LatencyStats&) const = default;
};

struct RunReport {
  std::uint8_t node_count = 0;
  Tick end_tick = 0;
  bool hit_run_cap = false;

  // Barrier outcome.
  bool sync_fired = false;
  Tick sync_fire_tick = 0;
  bool barrier_timeout = false;
  std::uint64_t barrier_ignored_requests = 0;
  std::vector<std::optional<Tick>> rt_start;  // per node

  std::vector<std::vector<TraceRecord>> trace;  // per receiving node

  // Latency histogram over all receivers, 8 ns bins keyed by bin floor ns.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> histogram;
  LatencyStats latency;

  std::vector<NodeCounters> node_counters;
  EventLedger ledger;
  std::vector<LaneStats> lanes;
};

/// Counter snapshot handed to a run observer.
struct ProbeSample {
  Tick tick = 0;
  std::uint64_t agg_copy_drops = 0;
  std::uint64_t chip_egress_drops = 0;
  std::uint64_t node_egress_drops = 0;
  std::uint64_t node_ingress_drops = 0;
};

class Engine {
 public:
  /// Validates the configuration; throws std::invalid_argument with an
  /// itemized message before any tick runs.
  explicit Engine(SimConfig config);

  /// Observer called every interval ticks; forces single-tick stepping.
  void set_probe(Tick interval, std::function<void(const ProbeSample&)> fn);

  RunReport run();

  /// Closed-form zero-contention chip-to-chip delay. Matches the
  /// simulated latency of a solitary spike exactly.
  static PathDelayBreakdown path_delay(const SimConfig& config, NodeId src, NodeId dst);

  /// Analytic expected delay (system cycles) from timestamp attach to
  /// chip arrival; the default jitter-buffer calibration.
  static std::uint32_t nominal_inbound_delay_cycles(const SimConfig& config, NodeId dst);

 private:
  struct LaneSet;
  void step_tick(Tick now);
  Tick next_tick(Tick now) const;
  bool quiescent(Tick now) const;
  void finalize(RunReport& report, Tick end_tick, bool hit_cap) const;

  SimConfig config_;
  std::vector<Chip> chips_;
  std::vector<Node> nodes_;
  std::vector<ChipLink> chip_up_;
  std::vector<ChipLink> chip_down_;
  std::vector<SerialLink<MgtFlit>> mgt_up_;
  std::vector<SerialLink<MgtFlit>> mgt_down_;
  std::unique_ptr<Aggregator> agg_;

  Tick probe_interval_ = 0;
  std::function<void(const ProbeSample&)> probe_;
};

/// Convenience wrapper: build, run, report.
RunReport run(const SimConfig& config);

}  // namespace fabricsim
