#include "fabricsim/chip.hpp"

#include <algorithm>
#include <stdexcept>

namespace fabricsim {

Chip::Chip(NodeId node, ChipParams params, std::vector<SourceSpec> sources)
    : node_(node), params_(params), sources_(std::move(sources)),
      next_emission_(sources_.size(), 0) {
  if (params_.egress_depth < 1) {
    throw std::invalid_argument("chip egress depth must be >= 1");
  }
  if (params_.jitter.depth < 1) {
    throw std::invalid_argument("jitter buffer depth must be >= 1");
  }
  for (const SourceSpec& s : sources_) {
    s.validate();
  }
}

void Chip::begin_section(Tick start_tick, Tick end_tick) {
  section_started_ = true;
  section_start_ = start_tick;
  section_end_ = end_tick;
}

void Chip::step_tx(Tick now, ChipLink& up) {
  if (!section_started_ || now < section_start_) return;

  // Emit everything due. The egress queue is the layer-1 boundary:
  // overflow is loss, not back-pressure.
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    const SourceSpec& s = sources_[i];
    while (next_emission_[i] < s.count) {
      const Tick scheduled =
          section_start_ + s.start_offset_ticks + next_emission_[i] * s.period_ticks;
      if (scheduled > now) break;
      ++next_emission_[i];
      ++generated_;
      if (egress_.size() < params_.egress_depth) {
        egress_.push_back(PendingSpike{s.label, now});
      } else {
        ++egress_drops_;
      }
    }
  }

  const std::uint32_t budget = up.sendable_events(now);
  if (budget == 0 || egress_.empty()) return;

  ChipFlit flit;
  const Timestamp8 ts = system_time_low8(SimTime{now});
  const std::size_t k =
      std::min<std::size_t>({budget, egress_.size(), Layer2Group::kMaxEntries});
  for (std::size_t i = 0; i < k; ++i) {
    const PendingSpike& spike = egress_.front();
    flit.group.push_back(Layer2Entry{spike.label, ts});
    flit.meta[i] = EventMeta{spike.emitted_at, node_.index(), true};
    egress_.pop_front();
  }
  if (!up.try_send(flit, now)) {
    throw std::logic_error("chip link rejected a group within its stated budget");
  }
}

void Chip::step_rx(Tick now, ChipLink& down) {
  while (auto flit = down.poll(now)) {
    for (std::size_t i = 0; i < flit->group.size(); ++i) {
      const Layer2Entry& entry = flit->group[i];
      ++arrivals_;
      raw_arrivals_.push_back(now);

      // Nearest preceding system cycle whose low byte matches the tag.
      const std::uint64_t now_sys = now / kTicksPerSystemCycle;
      const std::uint64_t delta = (now_sys - entry.timestamp.value()) & 0xFF;
      const std::uint64_t sent_sys = now_sys - delta;
      const Tick release =
          std::max<Tick>(now, (sent_sys + params_.jitter.expected_delay_cycles) *
                                  kTicksPerSystemCycle);

      if (release <= now) {
        deliver(now, entry.label, flit->meta[i]);
      } else if (held_.size() >= params_.jitter.depth) {
        // Full buffer degrades to pass-through; nothing is dropped here.
        ++jitter_misses_;
        deliver(now, entry.label, flit->meta[i]);
      } else {
        held_.push(HeldSpike{release, hold_seq_++, entry.label, flit->meta[i]});
      }
    }
  }
}

void Chip::step_release(Tick now) {
  while (!held_.empty() && held_.top().release_at <= now) {
    const HeldSpike spike = held_.top();
    held_.pop();
    deliver(now, spike.label, spike.meta);
  }
}

void Chip::deliver(Tick now, ChipLabel label, const EventMeta& meta) {
  if (section_started_ && now >= section_start_ && now < section_end_) {
    trace_.push_back(TraceRecord{label, SimTime{now}, SimTime{meta.emitted_at}});
  } else {
    ++post_section_;
  }
}

std::optional<Tick> Chip::next_activity(Tick now) const {
  std::optional<Tick> best;
  auto consider_system_edge = [&](Tick t) {
    t = std::max(t, now + 1);
    t += t & 1;
    if (!best || t < *best) best = t;
  };

  if (section_started_) {
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      const SourceSpec& s = sources_[i];
      if (next_emission_[i] >= s.count) continue;
      consider_system_edge(section_start_ + s.start_offset_ticks +
                           next_emission_[i] * s.period_ticks);
    }
  }
  if (!egress_.empty()) consider_system_edge(now + 1);
  if (!held_.empty()) consider_system_edge(held_.top().release_at);
  return best;
}

}  // namespace fabricsim
