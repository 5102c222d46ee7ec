#include <benchmark/benchmark.h>

#include "fabricsim/engine.hpp"
#include "fabricsim/harness.hpp"
#include "fabricsim/netcompiler.hpp"

namespace {

using namespace fabricsim;

// End-to-end simulation rate: a 3:1 fan-in near saturation, measured in
// simulated ticks per wall second.
void BM_EngineFanIn(benchmark::State& state) {
  SweepSpec spec;
  spec.spikes_per_point = 4096;
  const SimConfig config = sweep_point_config(spec, /*period_ticks=*/4);

  Tick total_ticks = 0;
  for (auto _ : state) {
    const RunReport report = run(config);
    total_ticks += report.end_tick;
    benchmark::DoNotOptimize(report.latency.p50_ns);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(total_ticks));
  state.SetLabel("items=simulated ticks");
}
BENCHMARK(BM_EngineFanIn)->Unit(benchmark::kMillisecond);

void BM_CompileRandomFabric(benchmark::State& state) {
  std::vector<LogicalConnection> connections;
  std::uint32_t x = 7;
  for (int i = 0; i < 64; ++i) {
    x = x * 1664525u + 1013904223u;
    connections.push_back(LogicalConnection{NodeId{(x >> 4) % 4}, ChipLabel{x & 0xFFFF},
                                            NodeId{(x >> 20) % 4},
                                            ChipLabel{(x >> 8) & 0xFFFF}});
  }
  for (auto _ : state) {
    const CompileResult result = compile(connections, 4);
    benchmark::DoNotOptimize(result.ok());
  }
}
BENCHMARK(BM_CompileRandomFabric)->Unit(benchmark::kMicrosecond);

void BM_VerifyProgram(benchmark::State& state) {
  std::vector<LogicalConnection> connections;
  for (std::uint32_t i = 0; i < 48; ++i) {
    connections.push_back(LogicalConnection{NodeId{i % 4}, ChipLabel{i * 7},
                                            NodeId{(i + 1) % 4}, ChipLabel{i * 11}});
  }
  const CompileResult compiled = compile(connections, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify(*compiled.program, connections).empty());
  }
}
BENCHMARK(BM_VerifyProgram)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
