// fabricsim command line front end.
//
//   compile           connectivity text -> fabric program binary
//   verify            check a program against a connectivity description
//   run               execute one experiment config, write the report
//   sweep             fan-in latency sweep with CSV output
//   bench-throughput  saturate one lane and measure the event rate
//   bench-barrier     whole-system synchronization scenarios
//
// Exit codes: 0 success, 1 usage, 2 bad input, 3 infeasible routing,
// 4 verification mismatch, 5 internal error. Failures print a one-line
// JSON error summary to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fabricsim/config_io.hpp"
#include "fabricsim/harness.hpp"

namespace {

using fabricsim::Calibration;

void print_error(const std::string& type, const std::string& message) {
  nlohmann::ordered_json err;
  err["error"]["type"] = type;
  err["error"]["message"] = message;
  std::cerr << err.dump() << "\n";
}

void apply_overrides(Calibration& cal, const std::vector<std::string>& overrides) {
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("override must look like key=value: " + kv);
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (!cal.set(key, value)) {
      std::string known;
      for (const std::string& k : Calibration::known_keys()) {
        known += known.empty() ? k : ", " + k;
      }
      throw std::invalid_argument("unknown override key '" + key + "' (known: " + known + ")");
    }
  }
}

int cmd_compile(const std::string& in, std::uint32_t nodes, const std::string& out) {
  const fabricsim::ParsedConnectivity parsed = fabricsim::load_connectivity(in);
  for (const std::string& w : parsed.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  const fabricsim::CompileResult result =
      fabricsim::compile(parsed.connections, static_cast<std::uint8_t>(nodes));
  if (!result.ok()) {
    nlohmann::ordered_json err;
    err["error"]["type"] = "infeasible";
    err["error"]["message"] = result.error.message;
    nlohmann::ordered_json conflicts = nlohmann::ordered_json::array();
    for (const fabricsim::LogicalConnection& c : result.error.conflicts) {
      conflicts.push_back({c.src_node.index(), c.src_label.value(), c.dst_node.index(),
                           c.dst_label.value()});
    }
    err["error"]["conflicts"] = conflicts;
    std::cerr << err.dump() << "\n";
    return 3;
  }
  fabricsim::store_fabric_program(*result.program, out);
  std::cout << fabricsim::describe_fabric_program(*result.program);
  return 0;
}

int cmd_verify(const std::string& program_path, const std::string& in) {
  const fabricsim::FabricProgram program = fabricsim::load_fabric_program(program_path);
  const fabricsim::ParsedConnectivity parsed = fabricsim::load_connectivity(in);
  const fabricsim::VerifyReport report = fabricsim::verify(program, parsed.connections);
  if (report.empty()) {
    std::cout << "verify: OK (" << parsed.connections.size() << " connections realized)\n";
    return 0;
  }
  nlohmann::ordered_json err;
  err["error"]["type"] = "verify_mismatch";
  err["error"]["missing"] = report.missing.size();
  err["error"]["spurious"] = report.spurious.size();
  err["error"]["mislabeled"] = report.mislabeled.size();
  std::cerr << err.dump() << "\n";
  for (const auto& m : report.missing) {
    std::cout << "missing: " << unsigned{m.src_node.index()} << " " << m.src_label.value()
              << " -> " << unsigned{m.dst_node.index()} << " " << m.dst_label.value() << "\n";
  }
  for (const auto& s : report.spurious) {
    std::cout << "spurious: " << unsigned{s.src_node.index()} << " " << s.src_label.value()
              << " -> " << unsigned{s.dst_node.index()} << " " << s.dst_label.value() << "\n";
  }
  for (const auto& m : report.mislabeled) {
    std::cout << "mislabeled: " << unsigned{m.expected.src_node.index()} << " "
              << m.expected.src_label.value() << " -> "
              << unsigned{m.expected.dst_node.index()} << " expected "
              << m.expected.dst_label.value() << " got " << m.actual.value() << "\n";
  }
  return 4;
}

int cmd_run(const std::string& config_path, const std::string& out,
            const std::vector<std::string>& overrides) {
  fabricsim::SimConfig config = fabricsim::load_sim_config(config_path);
  apply_overrides(config.cal, overrides);
  const fabricsim::RunReport report = fabricsim::run(config);
  if (!out.empty()) {
    fabricsim::store_run_report(report, out);
  }
  std::cout << fabricsim::serialize_run_summary(report);
  return 0;
}

int cmd_sweep(std::vector<double> rates, std::uint32_t fan_in, std::uint64_t spikes,
              const std::string& out, std::uint32_t workers,
              const std::vector<std::string>& overrides) {
  fabricsim::SweepSpec spec;
  spec.fan_in = fan_in;
  spec.rates_mhz = std::move(rates);
  spec.spikes_per_point = spikes;
  spec.workers = workers;
  apply_overrides(spec.cal, overrides);

  const fabricsim::SweepResult result = fabricsim::latency_sweep(spec);
  if (!out.empty()) {
    fabricsim::store_sweep(result, out);
  }
  std::cout << fabricsim::sweep_percentiles_csv(result);
  if (result.saturation_index) {
    std::cout << "# saturation at "
              << result.points[*result.saturation_index].realized_mhz << " MHz per sender\n";
  } else {
    std::cout << "# no saturation within the swept rates\n";
  }
  return 0;
}

int cmd_bench_throughput(const std::string& lane, std::uint64_t words,
                         const std::vector<std::string>& overrides) {
  Calibration cal;
  apply_overrides(cal, overrides);
  const fabricsim::BenchLane which =
      lane == "chip" ? fabricsim::BenchLane::kChip : fabricsim::BenchLane::kMgt;
  const fabricsim::ThroughputResult r = fabricsim::throughput_bench(which, cal, words);
  nlohmann::ordered_json j;
  j["lane"] = lane;
  j["events"] = r.events;
  j["busy_ticks"] = r.busy_ticks;
  j["events_per_second"] = r.events_per_second;
  j["expected_events_per_second"] = r.expected_events_per_second;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_bench_barrier(const std::string& scenario, std::uint32_t nodes,
                      const std::vector<std::string>& overrides) {
  Calibration cal;
  apply_overrides(cal, overrides);
  fabricsim::BarrierScenario which = fabricsim::BarrierScenario::kAllRequest;
  if (scenario == "missing-node") which = fabricsim::BarrierScenario::kMissingNode;
  if (scenario == "straggler") which = fabricsim::BarrierScenario::kStraggler;
  const fabricsim::BarrierTestResult r =
      fabricsim::barrier_test(which, static_cast<std::uint8_t>(nodes), cal);
  std::cout << fabricsim::barrier_report_text(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-level simulator of an FPGA-based spike-routing fabric"};
  app.require_subcommand(1);

  std::vector<std::string> overrides;
  app.add_option("--override", overrides, "calibration override key=value")
      ->take_all()
      ->expected(-1);

  // compile
  auto* compile_cmd = app.add_subcommand("compile", "compile connectivity into a fabric program");
  std::string compile_in, compile_out = "program.bin";
  std::uint32_t compile_nodes = 4;
  compile_cmd->add_option("--in", compile_in, "connectivity text file")->required();
  compile_cmd->add_option("--nodes", compile_nodes, "fabric lane count (1-16)")->required();
  compile_cmd->add_option("--out", compile_out, "output program file");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "check a program against connectivity");
  std::string verify_program, verify_in;
  verify_cmd->add_option("--program", verify_program, "fabric program file")->required();
  verify_cmd->add_option("--in", verify_in, "connectivity text file")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "run one experiment config");
  std::string run_config, run_out;
  run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
  run_cmd->add_option("--out", run_out, "report output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "fan-in latency sweep");
  std::vector<double> sweep_rates = {1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 62.5, 83.3, 125.0};
  std::uint32_t sweep_fan_in = 3;
  std::uint64_t sweep_spikes = 1u << 15;
  std::uint32_t sweep_workers = 1;
  std::string sweep_out;
  sweep_cmd->add_option("--rates", sweep_rates, "per-sender rates in MHz")->delimiter(',');
  sweep_cmd->add_option("--fan-in", sweep_fan_in, "senders per receiver");
  sweep_cmd->add_option("--spikes", sweep_spikes, "generated spikes per rate point");
  sweep_cmd->add_option("--workers", sweep_workers, "parallel simulations");
  sweep_cmd->add_option("--out", sweep_out, "CSV output directory");

  // bench-throughput
  auto* tp_cmd = app.add_subcommand("bench-throughput", "saturate one lane");
  std::string tp_lane = "mgt";
  std::uint64_t tp_words = 2'000'000;
  tp_cmd->add_option("--lane", tp_lane, "mgt or chip")
      ->check(CLI::IsMember({"mgt", "chip"}));
  tp_cmd->add_option("--words", tp_words, "events to push");

  // bench-barrier
  auto* bar_cmd = app.add_subcommand("bench-barrier", "synchronization scenarios");
  std::string bar_scenario = "all-request";
  std::uint32_t bar_nodes = 4;
  bar_cmd->add_option("--scenario", bar_scenario, "all-request, missing-node or straggler")
      ->check(CLI::IsMember({"all-request", "missing-node", "straggler"}));
  bar_cmd->add_option("--nodes", bar_nodes, "node count (2-16)");

  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->fallthrough();  // global --override may follow the subcommand
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (compile_cmd->parsed()) return cmd_compile(compile_in, compile_nodes, compile_out);
    if (verify_cmd->parsed()) return cmd_verify(verify_program, verify_in);
    if (run_cmd->parsed()) return cmd_run(run_config, run_out, overrides);
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_rates, sweep_fan_in, sweep_spikes, sweep_out, sweep_workers,
                       overrides);
    }
    if (tp_cmd->parsed()) return cmd_bench_throughput(tp_lane, tp_words, overrides);
    if (bar_cmd->parsed()) return cmd_bench_barrier(bar_scenario, bar_nodes, overrides);
  } catch (const fabricsim::IoError& e) {
    print_error("io", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    print_error("invalid_argument", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 5;
  }
  return 1;
}
