#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fabricsim/engine.hpp"

// Experiment front end: fan-in latency sweeps, lane throughput and
// barrier scenarios, with plot-ready CSV output (no rendering).

namespace fabricsim {

struct SweepSpec {
  std::uint32_t fan_in = 3;             // senders per receiver
  std::vector<double> rates_mhz;        // per-sender regular rates
  std::uint64_t spikes_per_point = 1u << 15;  // generated per rate point, all senders
  std::string topology = "star";
  Calibration cal;
  std::uint32_t workers = 1;
};

struct RatePoint {
  double requested_mhz = 0.0;
  Tick period_ticks = 0;
  double realized_mhz = 0.0;
  LatencyStats latency;
  std::uint64_t drops = 0;
  bool saturated = false;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> histogram;  // bin_ns -> count
};

struct SweepResult {
  std::vector<RatePoint> points;          // in requested order
  std::optional<std::size_t> saturation_index;  // first saturated point
};

/// One run per rate; points are independent and may execute on worker
/// threads. A point saturates when it drops events or its p99 diverges
/// from the median (p99 > 2 * p50).
SweepResult latency_sweep(const SweepSpec& spec);

/// The exact config a sweep point runs, for reproduction and oracles.
SimConfig sweep_point_config(const SweepSpec& spec, Tick period_ticks);

std::string sweep_histogram_csv(const SweepResult& result);
std::string sweep_percentiles_csv(const SweepResult& result);
void store_sweep(const SweepResult& result, const std::filesystem::path& dir);

enum class BenchLane : std::uint8_t { kMgt, kChip };

struct ThroughputResult {
  std::uint64_t events = 0;
  Tick busy_ticks = 0;
  double events_per_second = 0.0;
  double expected_events_per_second = 0.0;  // (1 - cc_length/cc_interval) * 250e6
};

/// Saturates one lane and measures the sustained event rate.
ThroughputResult throughput_bench(BenchLane lane, const Calibration& cal,
                                  std::uint64_t words = 2'000'000);

enum class BarrierScenario : std::uint8_t { kAllRequest, kMissingNode, kStraggler };

struct BarrierTestResult {
  bool fired = false;
  bool timed_out = false;
  Tick fire_tick = 0;
  std::vector<std::optional<Tick>> starts;  // per node
  std::uint64_t max_skew_cycles = 0;
  std::uint64_t ignored_requests = 0;
};

/// Whole-engine barrier scenarios. The straggler delays one node's
/// uplink inside the timeout window; the missing node delays it beyond.
BarrierTestResult barrier_test(BarrierScenario scenario, std::uint8_t node_count,
                               const Calibration& cal);

std::string barrier_report_text(const BarrierTestResult& result);

}  // namespace fabricsim
