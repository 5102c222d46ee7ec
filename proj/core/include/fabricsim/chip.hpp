#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <vector>

#include "fabricsim/link.hpp"
#include "fabricsim/types.hpp"

// Minimal ASIC endpoint. The analog core is replaced by deterministic
// regular-rate spike generators feeding a shallow layer-1 egress queue;
// overflow there is real loss. The receive side reconstructs send times
// from the 8-bit layer-2 timestamp and releases spikes against an
// expected link delay, then records arrivals for the experiment trace.

namespace fabricsim {

struct SourceSpec {
  ChipLabel label;
  Tick period_ticks = 1;
  std::uint64_t count = 1;
  Tick start_offset_ticks = 0;

  void validate() const {
    if (period_ticks < 1) throw std::invalid_argument("source period must be >= 1 tick");
    if (count < 1) throw std::invalid_argument("source count must be >= 1");
  }
};

struct JitterBufferParams {
  std::uint32_t expected_delay_cycles = 0;  // system cycles from timestamp attach to arrival
  std::uint32_t depth = 16;
};

struct ChipParams {
  std::uint32_t egress_depth = 2;  // layer-1 style: minimal buffering, loss on overflow
  JitterBufferParams jitter;
};

struct TraceRecord {
  ChipLabel label;
  SimTime arrived_at;
  SimTime emitted_at;

  constexpr auto operator<=>(const TraceRecord&) const = default;
};

class Chip {
 public:
  Chip(NodeId node, ChipParams params, std::vector<SourceSpec> sources);

  /// Arms the sources and the trace window. start/end are absolute ticks;
  /// source offsets are relative to start.
  void begin_section(Tick start_tick, Tick end_tick);
  bool section_started() const { return section_started_; }

  /// System edge: emit due spikes into the egress queue, then push one
  /// group onto the chip link within its event budget.
  void step_tx(Tick now, ChipLink& up);

  /// System edge: accept arrivals into the jitter buffer.
  void step_rx(Tick now, ChipLink& down);

  /// System edge: release due spikes to the synapse trace.
  void step_release(Tick now);

  const std::vector<TraceRecord>& trace() const { return trace_; }

  // Pre-compensation arrival ticks, for jitter diagnostics.
  const std::vector<Tick>& raw_arrival_ticks() const { return raw_arrivals_; }

  std::uint64_t generated() const { return generated_; }
  std::uint64_t egress_drops() const { return egress_drops_; }
  std::uint64_t arrivals() const { return arrivals_; }
  std::uint64_t jitter_misses() const { return jitter_misses_; }
  std::uint64_t post_section_arrivals() const { return post_section_; }

  std::size_t in_flight() const { return egress_.size() + held_.size(); }
  std::optional<Tick> next_activity(Tick now) const;

 private:
  struct PendingSpike {
    ChipLabel label;
    Tick emitted_at;
  };
  struct HeldSpike {
    Tick release_at;
    std::uint64_t seq;
    ChipLabel label;
    EventMeta meta;
    bool operator>(const HeldSpike& o) const {
      if (release_at != o.release_at) return release_at > o.release_at;
      return seq > o.seq;
    }
  };

  void deliver(Tick now, ChipLabel label, const EventMeta& meta);

  NodeId node_;
  ChipParams params_;
  std::vector<SourceSpec> sources_;
  std::vector<std::uint64_t> next_emission_;  // per source

  bool section_started_ = false;
  Tick section_start_ = 0;
  Tick section_end_ = std::numeric_limits<Tick>::max();

  std::deque<PendingSpike> egress_;
  std::priority_queue<HeldSpike, std::vector<HeldSpike>, std::greater<HeldSpike>> held_;
  std::uint64_t hold_seq_ = 0;

  std::vector<TraceRecord> trace_;
  std::vector<Tick> raw_arrivals_;

  std::uint64_t generated_ = 0;
  std::uint64_t egress_drops_ = 0;
  std::uint64_t arrivals_ = 0;
  std::uint64_t jitter_misses_ = 0;
  std::uint64_t post_section_ = 0;
};

}  // namespace fabricsim
