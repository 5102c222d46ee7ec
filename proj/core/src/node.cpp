#include "fabricsim/node.hpp"

#include <algorithm>
#include <stdexcept>

namespace fabricsim {

std::optional<std::uint64_t> PlaybackProgram::end_cycles() const {
  for (const PlaybackCommand& c : commands) {
    if (c.kind == PlaybackCommand::Kind::kEndOfRealtime) return c.at_cycles;
  }
  return std::nullopt;
}

void PlaybackProgram::validate() const {
  std::uint64_t last_at = 0;
  bool saw_barrier = false;
  bool saw_end = false;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const PlaybackCommand& c = commands[i];
    switch (c.kind) {
      case PlaybackCommand::Kind::kBarrierSync:
        if (i != 0) throw std::invalid_argument("barrier sync must be the first command");
        if (saw_barrier) throw std::invalid_argument("duplicate barrier sync");
        saw_barrier = true;
        break;
      case PlaybackCommand::Kind::kEmitSpikes:
        if (saw_end) throw std::invalid_argument("command after end of realtime");
        if (c.group.size() == 0) throw std::invalid_argument("empty playback group");
        if (c.at_cycles < last_at) {
          throw std::invalid_argument("playback timestamps must be non-decreasing");
        }
        last_at = c.at_cycles;
        break;
      case PlaybackCommand::Kind::kEndOfRealtime:
        if (saw_end) throw std::invalid_argument("duplicate end of realtime");
        if (c.at_cycles < last_at) {
          throw std::invalid_argument("playback timestamps must be non-decreasing");
        }
        saw_end = true;
        break;
    }
  }
  if (!commands.empty() && !saw_barrier) {
    throw std::invalid_argument("non-empty playback must start with barrier sync");
  }
}

Node::Node(NodeId id, NodeParams params) : id_(id), params_(params) {
  params_.validate();
}

void Node::configure_luts(OutboundLut out, InboundLut in, Tick now) {
  if (in_realtime_section(now)) {
    throw std::runtime_error("LUT reconfiguration rejected inside a real-time section");
  }
  out_lut_ = std::move(out);
  in_lut_ = std::move(in);
}

void Node::load_playback(PlaybackProgram program) {
  program.validate();
  playback_ = std::move(program);
  playback_cursor_ = 0;
  barrier_request_queued_ = false;
}

void Node::observe_sync(Tick start_tick) {
  if (synced_) return;
  synced_ = true;
  rt_start_ = start_tick;
  if (auto end = playback_.end_cycles()) {
    section_end_ = start_tick + *end * kTicksPerSystemCycle;
  }
  if (playback_.has_barrier()) playback_cursor_ = 1;
}

void Node::step_outbound(Tick now, ChipLink& from_chip, SerialLink<MgtFlit>& to_agg) {
  if (!barrier_request_queued_ && playback_.has_barrier()) {
    // The playback buffer executes its barrier command up front; the
    // request rides the normal fabric egress path.
    egress_.push_back(EgressItem{
        MgtFlit{MgtWord::command(CommandCode::barrier_request()), EventMeta{}}, now});
    barrier_request_queued_ = true;
  }
  if (now % kTicksPerSystemCycle == 0) {
    tap_chip_traffic(now, from_chip);
  }
  transmit_fabric(now, to_agg);
}

void Node::tap_chip_traffic(Tick now, ChipLink& from_chip) {
  while (auto flit = from_chip.poll(now)) {
    for (std::size_t i = 0; i < flit->group.size(); ++i) {
      ++tapped_;
      const ChipLabel label = flit->group[i].label;  // timestamp discarded
      if (!out_lut_.enabled(label)) {
        ++out_filtered_;
        continue;
      }
      if (egress_.size() >= params_.egress_depth) {
        ++egress_drops_;
        continue;
      }
      const Tick ready = now + params_.cdc_out_cycles * kTicksPerSystemCycle +
                         params_.lut_pipeline_cycles;
      egress_.push_back(
          EgressItem{MgtFlit{MgtWord::event(out_lut_.target(label)), flit->meta[i]}, ready});
      egress_high_water_ = std::max(egress_high_water_, egress_.size());
    }
  }
}

void Node::transmit_fabric(Tick now, SerialLink<MgtFlit>& to_agg) {
  if (egress_.empty() || egress_.front().ready_at > now) return;
  if (to_agg.try_send(egress_.front().flit, now)) {
    egress_.pop_front();
  }
}

void Node::step_inbound(Tick now, SerialLink<MgtFlit>& from_agg, ChipLink& to_chip) {
  receive_fabric(now, from_agg);
  if (now % kTicksPerSystemCycle != 0) return;

  pack_routed(now);
  if (params_.playback_priority) {
    try_send_playback(now, to_chip);
    try_send_routed(now, to_chip);
  } else {
    try_send_routed(now, to_chip);
    try_send_playback(now, to_chip);
  }
}

void Node::receive_fabric(Tick now, SerialLink<MgtFlit>& from_agg) {
  while (auto flit = from_agg.poll(now)) {
    const MgtWord& word = flit->word;
    if (!word.is_event()) {
      // The aggregator strips commands; seeing one here is a fault.
      ++unexpected_commands_;
      continue;
    }
    const FabricLabel fabric{word.payload};
    if (!in_lut_.enabled(fabric)) {
      ++in_filtered_;
      continue;
    }
    if (ingress_.size() >= params_.ingress_depth) {
      ++ingress_drops_;
      continue;
    }
    ingress_.push_back(
        IngressItem{in_lut_.target(fabric), flit->meta, now + params_.lut_pipeline_cycles});
    ingress_high_water_ = std::max(ingress_high_water_, ingress_.size());
  }
}

void Node::pack_routed(Tick now) {
  // The pipeline naturally holds pack+cdc groups; one more slot keeps a
  // line-rate stream packing every cycle. Beyond that the backlog stays
  // in the bounded ingress queue.
  const std::size_t pipeline_room =
      params_.pack_latency_cycles + params_.cdc_in_cycles + 1;
  if (staged_.size() >= pipeline_room) return;
  if (ingress_.empty() || ingress_.front().ready_at > now) return;

  ChipFlit flit;
  const Timestamp8 ts = system_time_low8(SimTime{now});
  std::size_t k = 0;
  while (k < Layer2Group::kMaxEntries && !ingress_.empty() &&
         ingress_.front().ready_at <= now) {
    flit.group.push_back(Layer2Entry{ingress_.front().label, ts});
    flit.meta[k] = ingress_.front().meta;
    ingress_.pop_front();
    ++k;
  }
  staged_.push_back(StagedGroup{
      flit, now + (params_.pack_latency_cycles + params_.cdc_in_cycles) * kTicksPerSystemCycle});
}

bool Node::try_send_playback(Tick now, ChipLink& to_chip) {
  if (!synced_) return false;
  bool sent = false;
  while (playback_cursor_ < playback_.commands.size()) {
    const PlaybackCommand& cmd = playback_.commands[playback_cursor_];
    const Tick due = rt_start_ + cmd.at_cycles * kTicksPerSystemCycle;
    if (cmd.kind == PlaybackCommand::Kind::kEndOfRealtime) {
      if (due > now) break;
      ++playback_cursor_;  // section end was precomputed at sync
      continue;
    }
    if (cmd.kind == PlaybackCommand::Kind::kBarrierSync) {
      ++playback_cursor_;
      continue;
    }
    if (due > now) break;
    ChipFlit flit;
    flit.group = cmd.group;
    for (std::size_t i = 0; i < cmd.group.size(); ++i) {
      flit.meta[i] = EventMeta{due, id_.index(), true};
    }
    if (!to_chip.try_send(flit, now)) break;  // stalled, retry next cycle
    playback_events_ += cmd.group.size();
    ++playback_cursor_;
    sent = true;
  }
  return sent;
}

bool Node::try_send_routed(Tick now, ChipLink& to_chip) {
  if (staged_.empty() || staged_.front().ready_at > now) return false;
  if (!to_chip.try_send(staged_.front().flit, now)) return false;
  staged_.pop_front();
  return true;
}

std::size_t Node::in_flight_events() const {
  std::size_t n = 0;
  for (const EgressItem& item : egress_) {
    if (item.flit.meta.valid) ++n;
  }
  n += ingress_.size();
  for (const StagedGroup& group : staged_) n += group.flit.group.size();
  return n;
}

bool Node::playback_done() const {
  if (playback_.empty()) return true;
  if (!synced_) return false;
  return playback_cursor_ >= playback_.commands.size();
}

std::optional<Tick> Node::next_activity(Tick now) const {
  std::optional<Tick> best;
  auto consider = [&](Tick t) {
    t = std::max(t, now + 1);
    if (!best || t < *best) best = t;
  };
  auto consider_system_edge = [&](Tick t) {
    t = std::max(t, now + 1);
    t += t & 1;
    if (!best || t < *best) best = t;
  };

  if (!egress_.empty()) consider(std::max(egress_.front().ready_at, now + 1));
  if (!ingress_.empty()) consider_system_edge(ingress_.front().ready_at);
  if (!staged_.empty()) consider_system_edge(staged_.front().ready_at);
  if (!barrier_request_queued_ && playback_.has_barrier()) consider(now + 1);
  if (synced_ && playback_cursor_ < playback_.commands.size()) {
    consider_system_edge(rt_start_ +
                         playback_.commands[playback_cursor_].at_cycles * kTicksPerSystemCycle);
  }
  return best;
}

}  // namespace fabricsim
