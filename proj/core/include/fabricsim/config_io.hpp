#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fabricsim/engine.hpp"
#include "fabricsim/netcompiler.hpp"

// External file formats: connectivity text, fabric program binary,
// experiment config JSON, run report CSV/JSON. All loaders are total:
// any byte sequence produces either a value or a structured IoError.
// Layouts are documented in docs/formats.md.

namespace fabricsim {

class IoError : public std::runtime_error {
 public:
  enum class Kind : std::uint8_t {
    kFile,       // cannot open / read / write
    kParse,      // malformed content
    kRange,      // value outside its domain
    kVersion,    // unknown format version
    kChecksum,   // payload checksum mismatch
    kTruncated,  // shorter than its header claims
  };

  IoError(Kind kind, std::string message, std::size_t line = 0)
      : std::runtime_error(std::move(message)), kind_(kind), line_(line) {}

  Kind kind() const { return kind_; }
  /// 1-based line number for text formats; 0 when not applicable.
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

struct ParsedConnectivity {
  std::vector<LogicalConnection> connections;
  std::vector<std::string> warnings;  // e.g. deduplicated lines
};

/// Line-oriented grammar: `src_node src_label -> dst_node dst_label`,
/// `#` comments, blank lines ignored. Duplicate edges are dropped with a
/// warning. Malformed lines throw IoError with the line number.
ParsedConnectivity parse_connectivity(std::string_view text);

/// Canonical form: sorted, deduplicated, one edge per line.
std::string serialize_connectivity(std::span<const LogicalConnection> connections);

ParsedConnectivity load_connectivity(const std::filesystem::path& path);

// Fabric program binary: magic, version, length, CRC32, then bit-exact
// LUT images (outbound 2^16 x 16-bit LE, inbound 2^15 x 17-bit packed),
// the route bitmap and the label assignment list.
std::vector<std::uint8_t> serialize_fabric_program(const FabricProgram& program);
FabricProgram parse_fabric_program(std::span<const std::uint8_t> bytes);
void store_fabric_program(const FabricProgram& program, const std::filesystem::path& path);
FabricProgram load_fabric_program(const std::filesystem::path& path);

/// One-screen human-readable summary of a program.
std::string describe_fabric_program(const FabricProgram& program);

// Experiment config, versioned JSON. Loading resolves referenced
// connectivity/program files relative to the config's directory and
// compiles when only connectivity is given.
SimConfig load_sim_config(const std::filesystem::path& path);
SimConfig parse_sim_config(std::string_view json_text, const std::filesystem::path& base_dir);
std::string serialize_sim_config(const SimConfig& config);
void store_sim_config(const SimConfig& config, const std::filesystem::path& path);

// Run report: summary.json, histogram.csv and per-receiver
// trace_node<k>.csv (columns label, emitted_ns, arrived_ns) in one
// directory.
void store_run_report(const RunReport& report, const std::filesystem::path& dir);
RunReport load_run_report(const std::filesystem::path& dir);
std::string serialize_run_summary(const RunReport& report);

}  // namespace fabricsim
