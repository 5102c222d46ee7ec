#include "fabricsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fabricsim/config_io.hpp"
#include "fabricsim/netcompiler.hpp"

namespace fabricsim {

namespace {

Tick period_from_rate(double rate_mhz) {
  if (rate_mhz <= 0.0) throw std::invalid_argument("sweep rates must be positive");
  const double ticks = 1000.0 / (rate_mhz * kTickNs);
  const Tick period = static_cast<Tick>(std::llround(ticks));
  if (period < 1) return 1;
  return period;
}

constexpr std::uint32_t kSenderLabelBase = 0x10;
constexpr std::uint32_t kReceiverLabelBase = 0x200;

}  // namespace

SimConfig sweep_point_config(const SweepSpec& spec, Tick period_ticks) {
  if (spec.fan_in < 1 || spec.fan_in > kMaxNodes - 1) {
    throw std::invalid_argument("fan_in must be in [1, 15]");
  }
  if (spec.topology != "star") {
    throw std::invalid_argument("unknown topology preset: " + spec.topology);
  }

  SimConfig config;
  config.node_count = static_cast<std::uint8_t>(spec.fan_in + 1);
  config.cal = spec.cal;

  std::vector<LogicalConnection> connections;
  for (std::uint32_t s = 1; s <= spec.fan_in; ++s) {
    connections.push_back(LogicalConnection{NodeId{s}, ChipLabel{kSenderLabelBase + s},
                                            NodeId{0}, ChipLabel{kReceiverLabelBase + s}});
  }
  CompileResult compiled = compile(connections, config.node_count);
  if (!compiled.ok()) {
    throw std::invalid_argument("sweep topology failed to compile: " + compiled.error.message);
  }
  config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
  config.connectivity = std::move(connections);

  config.sources.resize(config.node_count);
  const std::uint64_t base = spec.spikes_per_point / spec.fan_in;
  const std::uint64_t remainder = spec.spikes_per_point % spec.fan_in;
  std::uint64_t max_count = 0;
  for (std::uint32_t s = 1; s <= spec.fan_in; ++s) {
    SourceSpec src;
    src.label = ChipLabel{kSenderLabelBase + s};
    src.period_ticks = period_ticks;
    src.count = base + (s <= remainder ? 1 : 0);
    src.start_offset_ticks = 2 * (s - 1);  // stagger senders by one system cycle
    max_count = std::max(max_count, src.count);
    config.sources[s].push_back(src);
  }

  config.run_cap_ticks = period_ticks * (max_count + 4) + 500'000;
  return config;
}

namespace {

RatePoint run_sweep_point(const SweepSpec& spec, double rate_mhz) {
  const Tick period = period_from_rate(rate_mhz);
  const SimConfig config = sweep_point_config(spec, period);
  const RunReport report = run(config);

  RatePoint point;
  point.requested_mhz = rate_mhz;
  point.period_ticks = period;
  point.realized_mhz = 1000.0 / (static_cast<double>(period) * kTickNs);
  point.latency = report.latency;
  point.drops = report.ledger.total_drops();
  point.histogram = report.histogram;
  point.saturated =
      point.drops > 0 ||
      (point.latency.count > 0 && point.latency.p99_ns > 2 * point.latency.p50_ns);
  return point;
}

}  // namespace

SweepResult latency_sweep(const SweepSpec& spec) {
  if (spec.rates_mhz.empty()) {
    throw std::invalid_argument("sweep needs at least one rate");
  }
  SweepResult result;
  result.points.resize(spec.rates_mhz.size());

  const std::uint32_t workers =
      std::max<std::uint32_t>(1, std::min<std::uint32_t>(spec.workers,
                                                         static_cast<std::uint32_t>(
                                                             spec.rates_mhz.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < spec.rates_mhz.size(); ++i) {
      result.points[i] = run_sweep_point(spec, spec.rates_mhz[i]);
    }
  } else {
    // Points are independent simulations; assembly is index-ordered, so
    // the result is invariant to scheduling.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::uint32_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= spec.rates_mhz.size()) return;
            result.points[i] = run_sweep_point(spec, spec.rates_mhz[i]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t i = 0; i < result.points.size(); ++i) {
    if (result.points[i].saturated) {
      result.saturation_index = i;
      break;
    }
  }
  return result;
}

std::string sweep_histogram_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "rate_mhz,bin_ns,count\n";
  for (const RatePoint& p : result.points) {
    for (const auto& [bin, count] : p.histogram) {
      out << p.realized_mhz << ',' << bin << ',' << count << '\n';
    }
  }
  return out.str();
}

std::string sweep_percentiles_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "rate_mhz,period_ticks,count,p1_ns,p50_ns,p99_ns,max_ns,drops,saturated\n";
  for (const RatePoint& p : result.points) {
    out << p.realized_mhz << ',' << p.period_ticks << ',' << p.latency.count << ','
        << p.latency.p1_ns << ',' << p.latency.p50_ns << ',' << p.latency.p99_ns << ','
        << p.latency.max_ns << ',' << p.drops << ',' << (p.saturated ? 1 : 0) << '\n';
  }
  return out.str();
}

void store_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& data) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write sweep output");
    out << data;
  };
  write("sweep_hist.csv", sweep_histogram_csv(result));
  write("sweep_percentiles.csv", sweep_percentiles_csv(result));
}

ThroughputResult throughput_bench(BenchLane lane, const Calibration& cal,
                                  std::uint64_t words) {
  if (words == 0) throw std::invalid_argument("throughput bench needs words > 0");
  ThroughputResult result;
  result.events = words;

  if (lane == BenchLane::kMgt) {
    SerialLink<MgtFlit> link(
        LinkParams{cal.mgt_latency_ticks, cal.mgt_cc_interval, cal.mgt_cc_length});
    const MgtFlit flit{MgtWord::event(FabricLabel{1}), EventMeta{}};
    Tick now = 0;
    Tick first = 0;
    Tick last = 0;
    std::uint64_t sent = 0;
    while (sent < words) {
      if (link.try_send(flit, now)) {
        if (sent == 0) first = now;
        last = now;
        ++sent;
      }
      ++now;
    }
    result.busy_ticks = last - first + 1;
    if (cal.mgt_cc_interval != 0) {
      result.expected_events_per_second =
          (1.0 - static_cast<double>(cal.mgt_cc_length) /
                     static_cast<double>(cal.mgt_cc_interval)) *
          250e6;
    } else {
      result.expected_events_per_second = 250e6;
    }
  } else {
    ChipLink link(LinkParams{cal.chip_link_latency_ticks, cal.chip_cc_interval,
                             cal.chip_cc_length},
                  cal.chip_burst, cal.chip_refill_per_cycle);
    Tick now = 0;
    Tick first = 0;
    Tick last = 0;
    std::uint64_t sent = 0;
    while (sent < words) {
      const std::uint32_t budget = std::min<std::uint32_t>(
          link.sendable_events(now),
          static_cast<std::uint32_t>(std::min<std::uint64_t>(words - sent, 3)));
      if (budget > 0) {
        ChipFlit flit;
        for (std::uint32_t i = 0; i < budget; ++i) {
          flit.group.push_back(Layer2Entry{ChipLabel{1}, Timestamp8{0}});
        }
        if (link.try_send(flit, now)) {
          if (sent == 0) first = now;
          last = now;
          sent += budget;
        }
      }
      now += kTicksPerSystemCycle;
    }
    result.busy_ticks = last - first + kTicksPerSystemCycle;
    result.expected_events_per_second = cal.chip_refill_per_cycle * 125e6;
  }

  result.events_per_second = static_cast<double>(words) /
                             (static_cast<double>(result.busy_ticks) * kTickNs * 1e-9);
  return result;
}

BarrierTestResult barrier_test(BarrierScenario scenario, std::uint8_t node_count,
                               const Calibration& cal) {
  if (node_count < 2 || node_count > kMaxNodes) {
    throw std::invalid_argument("barrier test needs 2..16 nodes");
  }

  SimConfig config;
  config.node_count = node_count;
  config.cal = cal;
  CompileResult compiled = compile({}, node_count);
  config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
  config.barrier.timeout_cycles = 1000;
  config.barrier.refractory_cycles = 16;

  config.lanes.resize(node_count);
  // Spread the request arrivals so the state machine has to collect.
  for (std::uint8_t i = 0; i < node_count; ++i) {
    LinkParams up{cal.mgt_latency_ticks + 3u * i, cal.mgt_cc_interval, cal.mgt_cc_length};
    config.lanes[i].mgt_up = up;
  }
  switch (scenario) {
    case BarrierScenario::kAllRequest:
      break;
    case BarrierScenario::kStraggler:
      config.lanes[node_count - 1].mgt_up->latency_ticks =
          cal.mgt_latency_ticks + 500 * kTicksPerSystemCycle;
      break;
    case BarrierScenario::kMissingNode:
      config.lanes[node_count - 1].mgt_up->latency_ticks =
          cal.mgt_latency_ticks +
          (config.barrier.timeout_cycles + 512) * kTicksPerSystemCycle;
      break;
  }

  const RunReport report = run(config);

  BarrierTestResult result;
  result.fired = report.sync_fired;
  result.timed_out = report.barrier_timeout;
  result.fire_tick = report.sync_fire_tick;
  result.starts = report.rt_start;
  result.ignored_requests = report.barrier_ignored_requests;

  std::optional<Tick> lo, hi;
  for (const auto& s : result.starts) {
    if (!s) continue;
    lo = lo ? std::min(*lo, *s) : *s;
    hi = hi ? std::max(*hi, *s) : *s;
  }
  if (lo && hi) {
    result.max_skew_cycles = (*hi - *lo) / kTicksPerSystemCycle;
  }
  return result;
}

std::string barrier_report_text(const BarrierTestResult& result) {
  std::ostringstream out;
  out << "barrier: fired=" << (result.fired ? "yes" : "no")
      << " timeout=" << (result.timed_out ? "yes" : "no");
  if (result.fired) {
    out << " fire_tick=" << result.fire_tick << " max_skew_cycles=" << result.max_skew_cycles;
  }
  out << " ignored_requests=" << result.ignored_requests << '\n';
  for (std::size_t i = 0; i < result.starts.size(); ++i) {
    out << "  node " << i << ": ";
    if (result.starts[i]) {
      out << "rt_start_tick=" << *result.starts[i];
    } else {
      out << "never started";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fabricsim
