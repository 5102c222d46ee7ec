#include "fabricsim/engine.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fabricsim {

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("override " + key + ": not an unsigned integer: " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("override " + key + ": not a boolean: " + value);
}

}  // namespace

bool Calibration::set(const std::string& key, const std::string& value) {
  if (key == "mgt_latency_ticks") {
    mgt_latency_ticks = parse_u64(key, value);
  } else if (key == "chip_link_latency_ticks") {
    chip_link_latency_ticks = parse_u64(key, value);
  } else if (key == "mgt_cc_interval") {
    mgt_cc_interval = parse_u64(key, value);
  } else if (key == "mgt_cc_length") {
    mgt_cc_length = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "chip_cc_interval") {
    chip_cc_interval = parse_u64(key, value);
  } else if (key == "chip_cc_length") {
    chip_cc_length = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "agg_pipeline_cycles") {
    agg_pipeline_cycles = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "agg_queue_depth") {
    agg_queue_depth = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "cdc_out_cycles") {
    node.cdc_out_cycles = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "cdc_in_cycles") {
    node.cdc_in_cycles = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "lut_pipeline_cycles") {
    node.lut_pipeline_cycles = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "pack_latency_cycles") {
    node.pack_latency_cycles = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "node_egress_depth") {
    node.egress_depth = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "node_ingress_depth") {
    node.ingress_depth = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "playback_priority") {
    node.playback_priority = parse_bool(key, value);
  } else if (key == "chip_egress_depth") {
    chip_egress_depth = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "chip_burst") {
    chip_burst = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "chip_refill_per_cycle") {
    chip_refill_per_cycle = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "jitter_depth") {
    jitter_depth = static_cast<std::uint32_t>(parse_u64(key, value));
  } else if (key == "jitter_expected_cycles") {
    if (value == "auto") {
      jitter_expected_cycles.reset();
    } else {
      jitter_expected_cycles = static_cast<std::uint32_t>(parse_u64(key, value));
    }
  } else {
    return false;
  }
  return true;
}

std::vector<std::string> Calibration::known_keys() {
  return {
      "mgt_latency_ticks",   "chip_link_latency_ticks",
      "mgt_cc_interval",     "mgt_cc_length",
      "chip_cc_interval",    "chip_cc_length",
      "agg_pipeline_cycles", "agg_queue_depth",
      "cdc_out_cycles",      "cdc_in_cycles",
      "lut_pipeline_cycles", "pack_latency_cycles",
      "node_egress_depth",   "node_ingress_depth",
      "playback_priority",   "chip_egress_depth",
      "chip_burst",          "chip_refill_per_cycle",
      "jitter_depth",        "jitter_expected_cycles",
  };
}

namespace {

NodeParams effective_node_params(const SimConfig& config, std::uint8_t i) {
  if (i < config.node_overrides.size() && config.node_overrides[i]) {
    return *config.node_overrides[i];
  }
  return config.cal.node;
}

LinkParams lane_or(const std::optional<LinkParams>& override_params, LinkParams fallback) {
  return override_params ? *override_params : fallback;
}

LinkParams chip_up_params(const SimConfig& c, std::uint8_t i) {
  const LinkParams fallback{c.cal.chip_link_latency_ticks, c.cal.chip_cc_interval,
                            c.cal.chip_cc_length};
  if (i < c.lanes.size()) return lane_or(c.lanes[i].chip_up, fallback);
  return fallback;
}
LinkParams chip_down_params(const SimConfig& c, std::uint8_t i) {
  const LinkParams fallback{c.cal.chip_link_latency_ticks, c.cal.chip_cc_interval,
                            c.cal.chip_cc_length};
  if (i < c.lanes.size()) return lane_or(c.lanes[i].chip_down, fallback);
  return fallback;
}
LinkParams mgt_up_params(const SimConfig& c, std::uint8_t i) {
  const LinkParams fallback{c.cal.mgt_latency_ticks, c.cal.mgt_cc_interval, c.cal.mgt_cc_length};
  if (i < c.lanes.size()) return lane_or(c.lanes[i].mgt_up, fallback);
  return fallback;
}
LinkParams mgt_down_params(const SimConfig& c, std::uint8_t i) {
  const LinkParams fallback{c.cal.mgt_latency_ticks, c.cal.mgt_cc_interval, c.cal.mgt_cc_length};
  if (i < c.lanes.size()) return lane_or(c.lanes[i].mgt_down, fallback);
  return fallback;
}

std::uint16_t all_lanes_mask(std::uint8_t n) {
  return static_cast<std::uint16_t>((1u << n) - 1);
}

}  // namespace

std::uint32_t Engine::nominal_inbound_delay_cycles(const SimConfig& config, NodeId dst) {
  const NodeParams np = effective_node_params(config, dst.index());
  const LinkParams down = chip_down_params(config, dst.index());
  return np.pack_latency_cycles + np.cdc_in_cycles +
         static_cast<std::uint32_t>(down.latency_ticks / kTicksPerSystemCycle);
}

Engine::Engine(SimConfig config) : config_(std::move(config)) {
  std::vector<std::string> problems;
  const std::uint8_t n = config_.node_count;

  if (n == 0 || n > kMaxNodes) problems.push_back("node_count must be in [1, 16]");
  if (config_.run_cap_ticks == 0) problems.push_back("run cap must be positive");
  if (!config_.program) {
    problems.push_back("no fabric program configured");
  } else {
    const FabricProgram& p = *config_.program;
    if (p.node_count != n || p.routes.node_count() != n ||
        p.outbound.size() != n || p.inbound.size() != n) {
      problems.push_back("fabric program dimensions do not match node_count");
    }
  }
  if (config_.sources.size() > n) problems.push_back("more source lists than nodes");
  if (config_.playback.size() > static_cast<std::size_t>(n)) {
    problems.push_back("more playback programs than nodes");
  }
  if (config_.barrier.skew.size() > static_cast<std::size_t>(n)) {
    problems.push_back("more skew entries than nodes");
  }
  for (const std::uint8_t s : config_.barrier.skew) {
    if (s > 1) {
      problems.push_back("sync skew must be 0 or 1 system cycles");
      break;
    }
  }
  if (n > 0 && n <= kMaxNodes) {
    const std::uint16_t mask = all_lanes_mask(n);
    const std::uint16_t participants = config_.barrier.participants.value_or(mask);
    if (participants == 0) problems.push_back("barrier participant set is empty");
    if (participants & ~mask) problems.push_back("barrier participant beyond node_count");
  }
  for (std::size_t i = 0; i < config_.sources.size(); ++i) {
    for (const SourceSpec& s : config_.sources[i]) {
      try {
        s.validate();
      } catch (const std::exception& e) {
        problems.push_back("node " + std::to_string(i) + " source: " + e.what());
      }
    }
  }
  for (std::size_t i = 0; i < config_.playback.size(); ++i) {
    try {
      config_.playback[i].validate();
    } catch (const std::exception& e) {
      problems.push_back("node " + std::to_string(i) + " playback: " + e.what());
    }
  }
  if (config_.program && !config_.connectivity.empty()) {
    const VerifyReport check = verify(*config_.program, config_.connectivity);
    if (!check.empty()) {
      problems.push_back("fabric program does not realize the stated connectivity (" +
                         std::to_string(check.missing.size()) + " missing, " +
                         std::to_string(check.spurious.size()) + " spurious, " +
                         std::to_string(check.mislabeled.size()) + " mislabeled)");
    }
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid simulation config:";
    for (const std::string& p : problems) msg << "\n  - " << p;
    throw std::invalid_argument(msg.str());
  }

  config_.sources.resize(n);
  config_.playback.resize(n);
  const std::uint16_t participants =
      config_.barrier.participants.value_or(all_lanes_mask(n));
  for (std::uint8_t i = 0; i < n; ++i) {
    // A participating node with no playback of its own still takes part
    // in the sync; it just leaves the chip link to the spike sources.
    if (config_.playback[i].empty() && (participants & (1u << i))) {
      config_.playback[i] = PlaybackProgram{{PlaybackCommand::barrier_sync()}};
    }
  }

  for (std::uint8_t i = 0; i < n; ++i) {
    const NodeParams np = effective_node_params(config_, i);
    np.validate();

    ChipParams cp;
    cp.egress_depth = config_.cal.chip_egress_depth;
    cp.jitter.depth = config_.cal.jitter_depth;
    cp.jitter.expected_delay_cycles = config_.cal.jitter_expected_cycles
                                          ? *config_.cal.jitter_expected_cycles
                                          : nominal_inbound_delay_cycles(config_, NodeId{i});

    chips_.emplace_back(NodeId{i}, cp, config_.sources[i]);
    nodes_.emplace_back(NodeId{i}, np);
    nodes_.back().configure_luts(config_.program->outbound[i], config_.program->inbound[i], 0);
    nodes_.back().load_playback(config_.playback[i]);

    chip_up_.emplace_back(chip_up_params(config_, i), config_.cal.chip_burst,
                          config_.cal.chip_refill_per_cycle);
    chip_down_.emplace_back(chip_down_params(config_, i), config_.cal.chip_burst,
                            config_.cal.chip_refill_per_cycle);
    mgt_up_.emplace_back(mgt_up_params(config_, i));
    mgt_down_.emplace_back(mgt_down_params(config_, i));
  }

  BarrierParams bp;
  bp.participants = config_.barrier.participants.value_or(all_lanes_mask(n));
  bp.timeout_cycles = config_.barrier.timeout_cycles;
  bp.refractory_cycles = config_.barrier.refractory_cycles;
  agg_ = std::make_unique<Aggregator>(
      config_.program->routes, bp,
      AggregatorParams{config_.cal.agg_pipeline_cycles, config_.cal.agg_queue_depth});
}

void Engine::set_probe(Tick interval, std::function<void(const ProbeSample&)> fn) {
  if (interval == 0) throw std::invalid_argument("probe interval must be positive");
  probe_interval_ = interval;
  probe_ = std::move(fn);
}

void Engine::step_tick(Tick now) {
  const bool system_edge = (now % kTicksPerSystemCycle == 0);
  const std::uint8_t n = config_.node_count;

  if (system_edge) {
    for (std::uint8_t i = 0; i < n; ++i) chips_[i].step_tx(now, chip_up_[i]);
  }
  for (std::uint8_t i = 0; i < n; ++i) {
    nodes_[i].step_outbound(now, chip_up_[i], mgt_up_[i]);
  }
  agg_->step(now, mgt_up_, mgt_down_);
  if (agg_->sync_pulse()) {
    for (std::uint8_t i = 0; i < n; ++i) {
      const Tick skew =
          i < config_.barrier.skew.size() ? config_.barrier.skew[i] : 0;
      const Tick start = now + skew * kTicksPerSystemCycle;
      nodes_[i].observe_sync(start);
      chips_[i].begin_section(start, nodes_[i].section_end());
    }
  }
  for (std::uint8_t i = 0; i < n; ++i) {
    nodes_[i].step_inbound(now, mgt_down_[i], chip_down_[i]);
  }
  if (system_edge) {
    for (std::uint8_t i = 0; i < n; ++i) {
      chips_[i].step_rx(now, chip_down_[i]);
      chips_[i].step_release(now);
    }
  }
}

Tick Engine::next_tick(Tick now) const {
  std::optional<Tick> best;
  auto consider = [&](std::optional<Tick> t) {
    if (!t) return;
    const Tick v = std::max(*t, now + 1);
    if (!best || v < *best) best = v;
  };
  for (std::uint8_t i = 0; i < config_.node_count; ++i) {
    consider(chips_[i].next_activity(now));
    consider(nodes_[i].next_activity(now));
    consider(chip_up_[i].next_delivery());
    consider(chip_down_[i].next_delivery());
    consider(mgt_up_[i].next_delivery());
    consider(mgt_down_[i].next_delivery());
  }
  consider(agg_->next_activity(now));
  if (!best) return 0;  // quiescent
  return *best;
}

RunReport Engine::run() {
  RunReport report;
  Tick now = 0;
  bool hit_cap = false;
  const bool skip_idle = !config_.single_tick_stepping && !probe_;

  for (;;) {
    step_tick(now);
    if (probe_ && now % probe_interval_ == 0) {
      ProbeSample sample;
      sample.tick = now;
      sample.agg_copy_drops = agg_->copy_drops();
      for (std::uint8_t i = 0; i < config_.node_count; ++i) {
        sample.chip_egress_drops += chips_[i].egress_drops();
        sample.node_egress_drops += nodes_[i].egress_drops();
        sample.node_ingress_drops += nodes_[i].ingress_drops();
      }
      probe_(sample);
    }

    const Tick next = next_tick(now);
    if (next == 0) break;  // nothing will ever happen again
    const Tick target = skip_idle ? next : now + 1;
    if (target > config_.run_cap_ticks) {
      hit_cap = true;
      break;
    }
    now = target;
  }

  finalize(report, now, hit_cap);
  return report;
}

void Engine::finalize(RunReport& report, Tick end_tick, bool hit_cap) const {
  const std::uint8_t n = config_.node_count;
  report.node_count = n;
  report.end_tick = end_tick;
  report.hit_run_cap = hit_cap;

  report.sync_fired = agg_->sync_fire_tick().has_value();
  report.sync_fire_tick = agg_->sync_fire_tick().value_or(0);
  report.barrier_timeout = agg_->barrier_timed_out();
  report.barrier_ignored_requests = agg_->fsm().ignored_requests();

  report.rt_start.resize(n);
  report.trace.resize(n);
  report.node_counters.resize(n);

  std::vector<std::uint64_t> latencies_ns;
  for (std::uint8_t i = 0; i < n; ++i) {
    report.rt_start[i] =
        nodes_[i].synced() ? std::optional<Tick>(nodes_[i].rt_start()) : std::nullopt;
    report.trace[i] = chips_[i].trace();
    for (const TraceRecord& r : report.trace[i]) {
      latencies_ns.push_back((r.arrived_at.ticks - r.emitted_at.ticks) * kTickNs);
    }

    NodeCounters& c = report.node_counters[i];
    c.generated = chips_[i].generated();
    c.chip_egress_drops = chips_[i].egress_drops();
    c.tapped = nodes_[i].tapped();
    c.out_filtered = nodes_[i].out_filtered();
    c.node_egress_drops = nodes_[i].egress_drops();
    c.in_filtered = nodes_[i].in_filtered();
    c.node_ingress_drops = nodes_[i].ingress_drops();
    c.jitter_misses = chips_[i].jitter_misses();
    c.traced = chips_[i].trace().size();
    c.node_egress_high_water = nodes_[i].egress_high_water();
    c.node_ingress_high_water = nodes_[i].ingress_high_water();
  }

  // Latency histogram in 8 ns bins plus nearest-rank percentiles.
  std::sort(latencies_ns.begin(), latencies_ns.end());
  std::map<std::uint64_t, std::uint64_t> hist;
  for (const std::uint64_t ns : latencies_ns) {
    hist[(ns / kSystemCycleNs) * kSystemCycleNs]++;
  }
  report.histogram.assign(hist.begin(), hist.end());
  report.latency.count = latencies_ns.size();
  if (!latencies_ns.empty()) {
    auto rank = [&](double pct) {
      const std::size_t k = static_cast<std::size_t>(
          std::max<long long>(0, static_cast<long long>(
                                     (pct / 100.0) * latencies_ns.size() + 0.5) - 1));
      return latencies_ns[std::min(k, latencies_ns.size() - 1)];
    };
    report.latency.p1_ns = rank(1.0);
    report.latency.p50_ns = rank(50.0);
    report.latency.p99_ns = rank(99.0);
    report.latency.max_ns = latencies_ns.back();
  }

  EventLedger& ledger = report.ledger;
  for (std::uint8_t i = 0; i < n; ++i) {
    ledger.generated += chips_[i].generated();
    ledger.playback_injected += nodes_[i].playback_events();
    ledger.traced += chips_[i].trace().size();
    ledger.chip_egress_drops += chips_[i].egress_drops();
    ledger.out_filtered += nodes_[i].out_filtered();
    ledger.node_egress_drops += nodes_[i].egress_drops();
    ledger.in_filtered += nodes_[i].in_filtered();
    ledger.node_ingress_drops += nodes_[i].ingress_drops();
    ledger.post_section += chips_[i].post_section_arrivals();
  }
  ledger.agg_unrouted = agg_->unrouted();
  ledger.agg_copy_drops = agg_->copy_drops();
  ledger.copy_surplus =
      agg_->copies_routed() - (agg_->events_in() - agg_->unrouted());

  std::uint64_t in_flight = 0;
  auto count_mgt = [&](const SerialLink<MgtFlit>& link) {
    link.for_each_in_flight([&](const MgtFlit& flit) {
      if (flit.word.is_event()) ++in_flight;
    });
  };
  auto count_chip = [&](const ChipLink& link) {
    link.wire().for_each_in_flight(
        [&](const ChipFlit& flit) { in_flight += flit.group.size(); });
  };
  for (std::uint8_t i = 0; i < n; ++i) {
    in_flight += chips_[i].in_flight();
    in_flight += nodes_[i].in_flight_events();
    count_chip(chip_up_[i]);
    count_chip(chip_down_[i]);
    count_mgt(mgt_up_[i]);
    count_mgt(mgt_down_[i]);
  }
  in_flight += agg_->in_flight_events();
  ledger.in_flight_at_end = in_flight;

  for (std::uint8_t i = 0; i < n; ++i) {
    const std::string suffix = std::to_string(i);
    report.lanes.push_back(LaneStats{"chip_up_" + suffix, chip_up_[i].wire().accepted(),
                                     chip_up_[i].wire().delivered(),
                                     chip_up_[i].wire().cc_pauses()});
    report.lanes.push_back(LaneStats{"mgt_up_" + suffix, mgt_up_[i].accepted(),
                                     mgt_up_[i].delivered(), mgt_up_[i].cc_pauses()});
    report.lanes.push_back(LaneStats{"mgt_down_" + suffix, mgt_down_[i].accepted(),
                                     mgt_down_[i].delivered(), mgt_down_[i].cc_pauses()});
    report.lanes.push_back(LaneStats{"chip_down_" + suffix, chip_down_[i].wire().accepted(),
                                     chip_down_[i].wire().delivered(),
                                     chip_down_[i].wire().cc_pauses()});
  }

  if (!ledger.balanced()) {
    throw std::logic_error("event conservation violated: sources " +
                           std::to_string(ledger.sources()) + " != sinks " +
                           std::to_string(ledger.sinks()));
  }
}

PathDelayBreakdown Engine::path_delay(const SimConfig& config, NodeId src, NodeId dst) {
  if (src.index() >= config.node_count || dst.index() >= config.node_count) {
    throw std::invalid_argument("path_delay: node beyond node_count");
  }
  const NodeParams nps = effective_node_params(config, src.index());
  const NodeParams npd = effective_node_params(config, dst.index());
  const Tick chip_up = chip_up_params(config, src.index()).latency_ticks;
  const Tick mgt_up = mgt_up_params(config, src.index()).latency_ticks;
  const Tick mgt_down = mgt_down_params(config, dst.index()).latency_ticks;
  const Tick chip_down = chip_down_params(config, dst.index()).latency_ticks;

  PathDelayBreakdown b;
  b.chip_link_up = chip_up;
  b.cdc_out = nps.cdc_out_cycles * kTicksPerSystemCycle;
  b.lut_out = nps.lut_pipeline_cycles;
  b.mgt_up = mgt_up;
  b.aggregator = config.cal.agg_pipeline_cycles;
  b.mgt_down = mgt_down;
  b.lut_in = npd.lut_pipeline_cycles;

  // Walk the stages from an even emission tick; only the pack stage is
  // quantized to the system clock.
  const Tick translated = b.chip_link_up + b.cdc_out + b.lut_out + b.mgt_up + b.aggregator +
                          b.mgt_down + b.lut_in;
  b.pack_align = translated & 1;
  b.pack_and_cdc_in =
      (npd.pack_latency_cycles + npd.cdc_in_cycles) * kTicksPerSystemCycle;
  b.chip_link_down = chip_down;

  const std::uint32_t expected =
      config.cal.jitter_expected_cycles
          ? *config.cal.jitter_expected_cycles
          : nominal_inbound_delay_cycles(config, dst);
  // Arrival relative to the pack tick vs. the release floor the jitter
  // buffer enforces from the attached timestamp.
  const Tick arrival_after_pack = b.pack_and_cdc_in + b.chip_link_down;
  const Tick floor_after_pack = static_cast<Tick>(expected) * kTicksPerSystemCycle;
  b.jitter_hold = floor_after_pack > arrival_after_pack
                      ? floor_after_pack - arrival_after_pack
                      : 0;
  return b;
}

RunReport run(const SimConfig& config) {
  Engine engine(config);
  return engine.run();
}

}  // namespace fabricsim
