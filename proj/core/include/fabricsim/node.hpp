#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "fabricsim/link.hpp"
#include "fabricsim/types.hpp"

// Node-FPGA multi-chip extension.
//
// Outbound: taps the chip-link trace stream, discards timestamps,
// unpacks, runs the 16->16 lookup (one bit is a routing enable) and
// crosses into the transceiver clock domain. Inbound: 15->17 reverse
// lookup, packs up to three spikes per system cycle, attaches the low
// byte of the system time, merges with the playback stream and sends on
// the chip link. Playback starts with the synchronization barrier.

namespace fabricsim {

struct NodeParams {
  std::uint32_t cdc_out_cycles = 10;      // system cycles, outbound clock-domain crossing
  std::uint32_t cdc_in_cycles = 9;        // system cycles, inbound clock-domain crossing
  std::uint32_t lut_pipeline_cycles = 4;  // MGT cycles per lookup
  std::uint32_t pack_latency_cycles = 4;  // system cycles
  std::uint32_t egress_depth = 16;
  std::uint32_t ingress_depth = 16;
  bool playback_priority = true;  // playback wins a same-cycle chip-link collision

  void validate() const {
    if (egress_depth < 1 || ingress_depth < 1) {
      throw std::invalid_argument("node queue depths must be >= 1");
    }
  }
};

/// 2^16-entry outbound table; entry = enable bit 15, fabric label bits 14:0.
class OutboundLut {
 public:
  static constexpr std::size_t kEntries = 1u << 16;
  static constexpr std::uint16_t kEnableBit = 0x8000;

  OutboundLut() : table_(kEntries, 0) {}

  void set(ChipLabel in, FabricLabel out) {
    table_[in.value()] = static_cast<std::uint16_t>(kEnableBit | out.value());
  }
  void disable(ChipLabel in) { table_[in.value()] = 0; }

  bool enabled(ChipLabel in) const { return (table_[in.value()] & kEnableBit) != 0; }
  FabricLabel target(ChipLabel in) const {
    return FabricLabel(table_[in.value()] & 0x7FFF);
  }

  std::uint16_t raw(std::size_t i) const { return table_[i]; }
  void set_raw(std::size_t i, std::uint16_t v) { table_[i] = v; }

  bool operator==(const OutboundLut&) const = default;

 private:
  std::vector<std::uint16_t> table_;
};

/// 2^15-entry inbound table; entry = enable bit 16, chip label bits 15:0.
class InboundLut {
 public:
  static constexpr std::size_t kEntries = 1u << 15;
  static constexpr std::uint32_t kEnableBit = 1u << 16;

  InboundLut() : table_(kEntries, 0) {}

  void set(FabricLabel in, ChipLabel out) {
    table_[in.value()] = kEnableBit | out.value();
  }
  void disable(FabricLabel in) { table_[in.value()] = 0; }

  bool enabled(FabricLabel in) const { return (table_[in.value()] & kEnableBit) != 0; }
  ChipLabel target(FabricLabel in) const {
    return ChipLabel(table_[in.value()] & 0xFFFF);
  }

  std::uint32_t raw(std::size_t i) const { return table_[i]; }
  void set_raw(std::size_t i, std::uint32_t v) { table_[i] = v & 0x1FFFF; }

  bool operator==(const InboundLut&) const = default;

 private:
  std::vector<std::uint32_t> table_;
};

struct PlaybackCommand {
  enum class Kind : std::uint8_t { kBarrierSync, kEmitSpikes, kEndOfRealtime };

  Kind kind = Kind::kBarrierSync;
  std::uint64_t at_cycles = 0;  // system cycles after the synchronized start
  Layer2Group group;            // kEmitSpikes only

  static PlaybackCommand barrier_sync() { return PlaybackCommand{Kind::kBarrierSync, 0, {}}; }
  static PlaybackCommand emit_spikes(std::uint64_t at_cycles, Layer2Group group) {
    return PlaybackCommand{Kind::kEmitSpikes, at_cycles, std::move(group)};
  }
  static PlaybackCommand end_of_realtime(std::uint64_t at_cycles) {
    return PlaybackCommand{Kind::kEndOfRealtime, at_cycles, {}};
  }
};

struct PlaybackProgram {
  std::vector<PlaybackCommand> commands;

  bool empty() const { return commands.empty(); }
  bool has_barrier() const {
    return !commands.empty() && commands.front().kind == PlaybackCommand::Kind::kBarrierSync;
  }
  /// End-of-realtime offset, if the program sets one.
  std::optional<std::uint64_t> end_cycles() const;

  /// Throws std::invalid_argument on a malformed program: the barrier
  /// must come first and be unique, timestamps must be non-decreasing,
  /// emit groups must be non-empty, end-of-realtime must be last.
  void validate() const;
};

class Node {
 public:
  Node(NodeId id, NodeParams params);

  NodeId id() const { return id_; }
  const NodeParams& params() const { return params_; }

  /// Replaces both tables atomically. Rejected inside a real-time section.
  void configure_luts(OutboundLut out, InboundLut in, Tick now);
  const OutboundLut& outbound_lut() const { return out_lut_; }
  const InboundLut& inbound_lut() const { return in_lut_; }

  void load_playback(PlaybackProgram program);

  /// Chip-to-fabric path; runs the transceiver transmit stage every tick
  /// and the system-domain tap on even ticks.
  void step_outbound(Tick now, ChipLink& from_chip, SerialLink<MgtFlit>& to_agg);

  /// Fabric-to-chip path; lookup every tick, pack/merge/send on even ticks.
  void step_inbound(Tick now, SerialLink<MgtFlit>& from_agg, ChipLink& to_chip);

  /// Synchronization signal observed; real-time section starts at start_tick.
  void observe_sync(Tick start_tick);

  bool synced() const { return synced_; }
  Tick rt_start() const { return rt_start_; }
  /// Absolute section end, once synced (max tick if the program sets none).
  Tick section_end() const { return section_end_; }
  bool in_realtime_section(Tick now) const {
    return synced_ && now >= rt_start_ && now < section_end_;
  }

  std::uint64_t tapped() const { return tapped_; }
  std::uint64_t out_filtered() const { return out_filtered_; }
  std::uint64_t egress_drops() const { return egress_drops_; }
  std::uint64_t in_filtered() const { return in_filtered_; }
  std::uint64_t ingress_drops() const { return ingress_drops_; }
  std::uint64_t unexpected_commands() const { return unexpected_commands_; }
  std::uint64_t playback_events() const { return playback_events_; }
  std::size_t egress_high_water() const { return egress_high_water_; }
  std::size_t ingress_high_water() const { return ingress_high_water_; }

  /// In-flight event words (excludes command words).
  std::size_t in_flight_events() const;
  bool playback_done() const;
  std::optional<Tick> next_activity(Tick now) const;

 private:
  struct EgressItem {
    MgtFlit flit;
    Tick ready_at;
  };
  struct IngressItem {
    ChipLabel label;
    EventMeta meta;
    Tick ready_at;
  };
  struct StagedGroup {
    ChipFlit flit;
    Tick ready_at;
  };

  void tap_chip_traffic(Tick now, ChipLink& from_chip);
  void transmit_fabric(Tick now, SerialLink<MgtFlit>& to_agg);
  void receive_fabric(Tick now, SerialLink<MgtFlit>& from_agg);
  void pack_routed(Tick now);
  bool try_send_playback(Tick now, ChipLink& to_chip);
  bool try_send_routed(Tick now, ChipLink& to_chip);

  NodeId id_;
  NodeParams params_;
  OutboundLut out_lut_;
  InboundLut in_lut_;

  PlaybackProgram playback_;
  std::size_t playback_cursor_ = 0;
  bool barrier_request_queued_ = false;
  bool synced_ = false;
  Tick rt_start_ = 0;
  Tick section_end_ = std::numeric_limits<Tick>::max();

  std::deque<EgressItem> egress_;
  std::deque<IngressItem> ingress_;
  // Pack/CDC pipeline: one group enters per system cycle and becomes
  // sendable pack_latency + cdc_in cycles later.
  std::deque<StagedGroup> staged_;

  std::uint64_t tapped_ = 0;
  std::uint64_t out_filtered_ = 0;
  std::uint64_t egress_drops_ = 0;
  std::uint64_t in_filtered_ = 0;
  std::uint64_t ingress_drops_ = 0;
  std::uint64_t unexpected_commands_ = 0;
  std::uint64_t playback_events_ = 0;
  std::size_t egress_high_water_ = 0;
  std::size_t ingress_high_water_ = 0;
};

}  // namespace fabricsim
