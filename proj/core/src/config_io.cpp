#include "fabricsim/config_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fabricsim {

namespace {

using nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(IoError::Kind::kFile, "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError(IoError::Kind::kFile, "cannot write " + path.string());
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) {
    throw IoError(IoError::Kind::kFile, "short write to " + path.string());
  }
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

// ---------------------------------------------------------------------------
// Connectivity text

ParsedConnectivity parse_connectivity(std::string_view text) {
  ParsedConnectivity out;
  std::set<LogicalConnection> seen;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }

    std::istringstream fields{std::string(line)};
    std::uint64_t src_node = 0, src_label = 0, dst_node = 0, dst_label = 0;
    std::string arrow;
    if (!(fields >> src_node)) {
      std::string leftover;
      if (fields.clear(), fields >> leftover) {
        throw IoError(IoError::Kind::kParse, "line " + std::to_string(line_no) +
                                                 ": expected `src_node src_label -> dst_node "
                                                 "dst_label`",
                      line_no);
      }
      continue;  // blank or comment-only line
    }
    if (!(fields >> src_label >> arrow >> dst_node >> dst_label) || arrow != "->") {
      throw IoError(IoError::Kind::kParse,
                    "line " + std::to_string(line_no) +
                        ": expected `src_node src_label -> dst_node dst_label`",
                    line_no);
    }
    std::string trailing;
    if (fields >> trailing) {
      throw IoError(IoError::Kind::kParse,
                    "line " + std::to_string(line_no) + ": trailing input `" + trailing + "`",
                    line_no);
    }
    if (src_node >= kMaxNodes || dst_node >= kMaxNodes) {
      throw IoError(IoError::Kind::kRange,
                    "line " + std::to_string(line_no) + ": node index must be < 16", line_no);
    }
    if (src_label > 0xFFFF || dst_label > 0xFFFF) {
      throw IoError(IoError::Kind::kRange,
                    "line " + std::to_string(line_no) + ": label must be < 65536", line_no);
    }
    const LogicalConnection c{NodeId{static_cast<std::uint32_t>(src_node)},
                              ChipLabel{static_cast<std::uint32_t>(src_label)},
                              NodeId{static_cast<std::uint32_t>(dst_node)},
                              ChipLabel{static_cast<std::uint32_t>(dst_label)}};
    if (!seen.insert(c).second) {
      out.warnings.push_back("line " + std::to_string(line_no) + ": duplicate edge ignored");
      continue;
    }
    out.connections.push_back(c);
  }
  return out;
}

std::string serialize_connectivity(std::span<const LogicalConnection> connections) {
  std::vector<LogicalConnection> sorted(connections.begin(), connections.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::ostringstream out;
  for (const LogicalConnection& c : sorted) {
    out << unsigned{c.src_node.index()} << ' ' << c.src_label.value() << " -> "
        << unsigned{c.dst_node.index()} << ' ' << c.dst_label.value() << '\n';
  }
  return out.str();
}

ParsedConnectivity load_connectivity(const std::filesystem::path& path) {
  return parse_connectivity(read_file(path));
}

// ---------------------------------------------------------------------------
// Fabric program binary
//
// Header: magic "FSIMFPG\0", u32 version, u32 node_count, u64 payload
// length, u32 CRC32(payload). Payload: per-node outbound LUTs (2^16 x
// 16-bit LE), per-node inbound LUTs (2^15 x 17-bit, LSB-first packed),
// route rows (u16 LE per source), then the assignment list.

namespace {

constexpr char kProgramMagic[8] = {'F', 'S', 'I', 'M', 'F', 'P', 'G', '\0'};
constexpr std::uint32_t kProgramVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v & 0xFFFF));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v & 0xFFFFFFFF));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v =
        static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    const std::uint32_t hi = u16();
    return lo | (hi << 16);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw IoError(IoError::Kind::kTruncated, "fabric program payload ends early");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void pack_17bit(ByteWriter& w, const InboundLut& lut) {
  std::vector<std::uint8_t> packed((InboundLut::kEntries * 17 + 7) / 8, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < InboundLut::kEntries; ++i) {
    const std::uint32_t v = lut.raw(i);
    for (int b = 0; b < 17; ++b, ++bit) {
      if ((v >> b) & 1u) {
        packed[bit >> 3] |= static_cast<std::uint8_t>(1u << (bit & 7));
      }
    }
  }
  for (const std::uint8_t byte : packed) w.u8(byte);
}

InboundLut unpack_17bit(ByteReader& r) {
  constexpr std::size_t kBytes = (InboundLut::kEntries * 17 + 7) / 8;
  std::vector<std::uint8_t> packed(kBytes);
  for (std::size_t i = 0; i < kBytes; ++i) packed[i] = r.u8();

  InboundLut lut;
  std::size_t bit = 0;
  for (std::size_t i = 0; i < InboundLut::kEntries; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 17; ++b, ++bit) {
      if ((packed[bit >> 3] >> (bit & 7)) & 1u) v |= 1u << b;
    }
    lut.set_raw(i, v);
  }
  return lut;
}

}  // namespace

std::vector<std::uint8_t> serialize_fabric_program(const FabricProgram& program) {
  ByteWriter payload;
  for (const OutboundLut& lut : program.outbound) {
    for (std::size_t i = 0; i < OutboundLut::kEntries; ++i) payload.u16(lut.raw(i));
  }
  for (const InboundLut& lut : program.inbound) pack_17bit(payload, lut);
  for (std::uint8_t s = 0; s < program.node_count; ++s) payload.u16(program.routes.row(s));
  payload.u32(static_cast<std::uint32_t>(program.assignments.size()));
  for (const LabelAssignment& a : program.assignments) {
    payload.u8(a.node.index());
    payload.u16(a.chip_label.value());
    payload.u16(a.fabric_label.value());
  }
  const std::vector<std::uint8_t> body = payload.take();

  ByteWriter out;
  for (const char c : kProgramMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(kProgramVersion);
  out.u32(program.node_count);
  out.u64(body.size());
  out.u32(crc32_of(body));
  std::vector<std::uint8_t> bytes = out.take();
  bytes.insert(bytes.end(), body.begin(), body.end());
  return bytes;
}

FabricProgram parse_fabric_program(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 8 + 4 + 4 + 8 + 4;
  if (bytes.size() < kHeader) {
    throw IoError(IoError::Kind::kTruncated, "fabric program shorter than its header");
  }
  for (std::size_t i = 0; i < 8; ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(kProgramMagic[i])) {
      throw IoError(IoError::Kind::kParse, "not a fabric program file");
    }
  }
  ByteReader header(bytes.subspan(8, kHeader - 8));
  const std::uint32_t version = header.u32();
  if (version != kProgramVersion) {
    throw IoError(IoError::Kind::kVersion,
                  "unsupported fabric program version " + std::to_string(version));
  }
  const std::uint32_t node_count = header.u32();
  if (node_count == 0 || node_count > kMaxNodes) {
    throw IoError(IoError::Kind::kRange,
                  "fabric program node count out of range: " + std::to_string(node_count));
  }
  const std::uint64_t payload_len = header.u64();
  const std::uint32_t stated_crc = header.u32();
  if (bytes.size() < kHeader + payload_len) {
    throw IoError(IoError::Kind::kTruncated, "fabric program payload ends early");
  }
  if (bytes.size() > kHeader + payload_len) {
    throw IoError(IoError::Kind::kParse, "trailing bytes after fabric program payload");
  }
  const auto body = bytes.subspan(kHeader, payload_len);
  if (crc32_of(body) != stated_crc) {
    throw IoError(IoError::Kind::kChecksum, "fabric program checksum mismatch");
  }

  ByteReader r(body);
  FabricProgram program;
  program.node_count = static_cast<std::uint8_t>(node_count);
  program.outbound.resize(node_count);
  program.inbound.reserve(node_count);
  for (std::uint32_t s = 0; s < node_count; ++s) {
    for (std::size_t i = 0; i < OutboundLut::kEntries; ++i) {
      program.outbound[s].set_raw(i, r.u16());
    }
  }
  for (std::uint32_t s = 0; s < node_count; ++s) {
    program.inbound.push_back(unpack_17bit(r));
  }
  program.routes = RouteMatrix{static_cast<std::uint8_t>(node_count)};
  const std::uint16_t lane_mask = static_cast<std::uint16_t>((1u << node_count) - 1);
  for (std::uint32_t s = 0; s < node_count; ++s) {
    const std::uint16_t row = r.u16();
    if (row & ~lane_mask) {
      throw IoError(IoError::Kind::kRange, "route row enables a lane beyond node count");
    }
    program.routes.set_row(static_cast<std::uint8_t>(s), row);
  }
  const std::uint32_t assignments = r.u32();
  program.assignments.reserve(assignments);
  for (std::uint32_t i = 0; i < assignments; ++i) {
    const std::uint8_t node = r.u8();
    const std::uint16_t chip = r.u16();
    const std::uint16_t fabric = r.u16();
    if (node >= node_count) {
      throw IoError(IoError::Kind::kRange, "assignment references a lane beyond node count");
    }
    if (fabric >= FabricLabel::kLimit) {
      throw IoError(IoError::Kind::kRange, "assignment fabric label out of range");
    }
    program.assignments.push_back(
        LabelAssignment{NodeId{node}, ChipLabel{chip}, FabricLabel{fabric}});
  }
  if (r.remaining() != 0) {
    throw IoError(IoError::Kind::kParse, "unparsed bytes inside fabric program payload");
  }
  return program;
}

void store_fabric_program(const FabricProgram& program, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_fabric_program(program);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

FabricProgram load_fabric_program(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  return parse_fabric_program(
      std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::string describe_fabric_program(const FabricProgram& program) {
  std::ostringstream out;
  out << "fabric program: " << unsigned{program.node_count} << " nodes, "
      << program.assignments.size() << " label assignments\n";
  for (std::uint8_t s = 0; s < program.node_count; ++s) {
    std::size_t out_enabled = 0;
    for (std::size_t i = 0; i < OutboundLut::kEntries; ++i) {
      if (program.outbound[s].raw(i) & OutboundLut::kEnableBit) ++out_enabled;
    }
    std::size_t in_enabled = 0;
    for (std::size_t i = 0; i < InboundLut::kEntries; ++i) {
      if (program.inbound[s].raw(i) & InboundLut::kEnableBit) ++in_enabled;
    }
    out << "  node " << unsigned{s} << ": outbound " << out_enabled << ", inbound "
        << in_enabled << ", routes to {";
    bool first = true;
    for (std::uint8_t d = 0; d < program.node_count; ++d) {
      if (!program.routes.enabled(NodeId{s}, NodeId{d})) continue;
      if (!first) out << ",";
      out << unsigned{d};
      first = false;
    }
    out << "}\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Experiment config JSON

namespace {

constexpr const char* kConfigFormat = "fabricsim-config";
constexpr std::uint32_t kConfigVersion = 1;

ordered_json calibration_to_json(const Calibration& cal) {
  ordered_json j;
  j["mgt_latency_ticks"] = cal.mgt_latency_ticks;
  j["chip_link_latency_ticks"] = cal.chip_link_latency_ticks;
  j["mgt_cc_interval"] = cal.mgt_cc_interval;
  j["mgt_cc_length"] = cal.mgt_cc_length;
  j["chip_cc_interval"] = cal.chip_cc_interval;
  j["chip_cc_length"] = cal.chip_cc_length;
  j["agg_pipeline_cycles"] = cal.agg_pipeline_cycles;
  j["agg_queue_depth"] = cal.agg_queue_depth;
  j["cdc_out_cycles"] = cal.node.cdc_out_cycles;
  j["cdc_in_cycles"] = cal.node.cdc_in_cycles;
  j["lut_pipeline_cycles"] = cal.node.lut_pipeline_cycles;
  j["pack_latency_cycles"] = cal.node.pack_latency_cycles;
  j["node_egress_depth"] = cal.node.egress_depth;
  j["node_ingress_depth"] = cal.node.ingress_depth;
  j["playback_priority"] = cal.node.playback_priority;
  j["chip_egress_depth"] = cal.chip_egress_depth;
  j["chip_burst"] = cal.chip_burst;
  j["chip_refill_per_cycle"] = cal.chip_refill_per_cycle;
  j["jitter_depth"] = cal.jitter_depth;
  if (cal.jitter_expected_cycles) {
    j["jitter_expected_cycles"] = *cal.jitter_expected_cycles;
  } else {
    j["jitter_expected_cycles"] = "auto";
  }
  return j;
}

void calibration_from_json(const ordered_json& j, Calibration& cal) {
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_unsigned() || value.is_number_integer()) {
      text = std::to_string(value.get<std::uint64_t>());
    } else {
      throw IoError(IoError::Kind::kParse, "calibration." + key + ": unsupported value type");
    }
    bool known = false;
    try {
      known = cal.set(key, text);
    } catch (const std::invalid_argument& e) {
      throw IoError(IoError::Kind::kRange, std::string("calibration: ") + e.what());
    }
    if (!known) {
      throw IoError(IoError::Kind::kParse, "calibration: unknown key " + key);
    }
  }
}

Layer2Group group_from_json(const ordered_json& events) {
  Layer2Group group;
  if (!events.is_array() || events.empty() || events.size() > Layer2Group::kMaxEntries) {
    throw IoError(IoError::Kind::kParse, "playback group takes one to three [label, ts] pairs");
  }
  for (const auto& pair : events) {
    if (!pair.is_array() || pair.size() != 2) {
      throw IoError(IoError::Kind::kParse, "playback event must be [label, timestamp]");
    }
    try {
      group.push_back(Layer2Entry{ChipLabel{pair[0].get<std::uint32_t>()},
                                  Timestamp8{pair[1].get<std::uint32_t>()}});
    } catch (const std::out_of_range& e) {
      throw IoError(IoError::Kind::kRange, std::string("playback event: ") + e.what());
    }
  }
  return group;
}

ordered_json group_to_json(const Layer2Group& group) {
  ordered_json events = ordered_json::array();
  for (std::size_t i = 0; i < group.size(); ++i) {
    events.push_back({group[i].label.value(), group[i].timestamp.value()});
  }
  return events;
}

}  // namespace

SimConfig parse_sim_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(IoError::Kind::kParse, std::string("config: ") + e.what());
  }

  try {
    if (j.value("format", "") != kConfigFormat) {
      throw IoError(IoError::Kind::kParse, "config: missing or wrong format tag");
    }
    if (j.value("version", 0u) != kConfigVersion) {
      throw IoError(IoError::Kind::kVersion,
                    "config: unsupported version " + std::to_string(j.value("version", 0u)));
    }

    SimConfig config;
    config.node_count = j.at("node_count").get<std::uint8_t>();
    config.run_cap_ticks = j.value("run_cap_ticks", config.run_cap_ticks);
    config.seed = j.value("seed", std::uint64_t{0});
    config.single_tick_stepping = j.value("single_tick_stepping", false);

    if (j.contains("calibration")) calibration_from_json(j["calibration"], config.cal);

    if (j.contains("connections")) {
      std::string joined;
      for (const auto& line : j["connections"]) {
        joined += line.get<std::string>();
        joined += '\n';
      }
      config.connectivity = parse_connectivity(joined).connections;
    }
    if (j.contains("connectivity_file")) {
      config.connectivity_file = j["connectivity_file"].get<std::string>();
      const ParsedConnectivity parsed =
          load_connectivity(base_dir / config.connectivity_file);
      config.connectivity.insert(config.connectivity.end(), parsed.connections.begin(),
                                 parsed.connections.end());
    }
    if (j.contains("program_file")) {
      config.program_file = j["program_file"].get<std::string>();
      config.program = std::make_shared<const FabricProgram>(
          load_fabric_program(base_dir / config.program_file));
    } else if (!config.connectivity.empty()) {
      CompileResult compiled = compile(config.connectivity, config.node_count);
      if (!compiled.ok()) {
        throw IoError(IoError::Kind::kParse,
                      "config: connectivity is infeasible: " + compiled.error.message);
      }
      config.program = std::make_shared<const FabricProgram>(std::move(*compiled.program));
    } else {
      throw IoError(IoError::Kind::kParse,
                    "config: needs program_file, connectivity_file or connections");
    }

    for (const auto& src : j.value("sources", ordered_json::array())) {
      const auto node = src.at("node").get<std::uint32_t>();
      if (node >= config.node_count) {
        throw IoError(IoError::Kind::kRange, "source on node beyond node_count");
      }
      if (config.sources.size() <= node) config.sources.resize(node + 1);
      SourceSpec spec;
      spec.label = ChipLabel{src.at("label").get<std::uint32_t>()};
      spec.period_ticks = src.at("period_ticks").get<std::uint64_t>();
      spec.count = src.at("count").get<std::uint64_t>();
      spec.start_offset_ticks = src.value("start_offset_ticks", std::uint64_t{0});
      config.sources[node].push_back(spec);
    }

    for (const auto& pb : j.value("playback", ordered_json::array())) {
      const auto node = pb.at("node").get<std::uint32_t>();
      if (node >= config.node_count) {
        throw IoError(IoError::Kind::kRange, "playback on node beyond node_count");
      }
      if (config.playback.size() <= node) config.playback.resize(node + 1);
      PlaybackProgram program;
      for (const auto& cmd : pb.at("commands")) {
        if (cmd.contains("barrier_sync")) {
          program.commands.push_back(PlaybackCommand::barrier_sync());
        } else if (cmd.contains("emit")) {
          program.commands.push_back(
              PlaybackCommand::emit_spikes(cmd["emit"].at("at").get<std::uint64_t>(),
                                           group_from_json(cmd["emit"].at("events"))));
        } else if (cmd.contains("end")) {
          program.commands.push_back(
              PlaybackCommand::end_of_realtime(cmd["end"].at("at").get<std::uint64_t>()));
        } else {
          throw IoError(IoError::Kind::kParse, "unknown playback command");
        }
      }
      config.playback[node] = std::move(program);
    }
    if (!config.playback.empty()) config.playback.resize(config.node_count);

    if (j.contains("barrier")) {
      const auto& b = j["barrier"];
      if (b.contains("participants")) {
        std::uint16_t mask = 0;
        for (const auto& p : b["participants"]) {
          const auto lane = p.get<std::uint32_t>();
          if (lane >= config.node_count) {
            throw IoError(IoError::Kind::kRange, "barrier participant beyond node_count");
          }
          mask |= static_cast<std::uint16_t>(1u << lane);
        }
        config.barrier.participants = mask;
      }
      config.barrier.timeout_cycles = b.value("timeout_cycles", config.barrier.timeout_cycles);
      config.barrier.refractory_cycles =
          b.value("refractory_cycles", config.barrier.refractory_cycles);
      if (b.contains("skew")) {
        for (const auto& s : b["skew"]) {
          config.barrier.skew.push_back(s.get<std::uint8_t>());
        }
      }
    }

    for (const auto& lane : j.value("lanes", ordered_json::array())) {
      const auto node = lane.at("node").get<std::uint32_t>();
      if (node >= config.node_count) {
        throw IoError(IoError::Kind::kRange, "lane override beyond node_count");
      }
      if (config.lanes.size() <= node) config.lanes.resize(node + 1);
      auto parse_link = [](const ordered_json& lj) {
        LinkParams p;
        p.latency_ticks = lj.at("latency_ticks").get<std::uint64_t>();
        p.cc_interval = lj.value("cc_interval", std::uint64_t{0});
        p.cc_length = lj.value("cc_length", 2u);
        return p;
      };
      if (lane.contains("chip_up")) config.lanes[node].chip_up = parse_link(lane["chip_up"]);
      if (lane.contains("chip_down")) {
        config.lanes[node].chip_down = parse_link(lane["chip_down"]);
      }
      if (lane.contains("mgt_up")) config.lanes[node].mgt_up = parse_link(lane["mgt_up"]);
      if (lane.contains("mgt_down")) {
        config.lanes[node].mgt_down = parse_link(lane["mgt_down"]);
      }
    }
    if (!config.lanes.empty()) config.lanes.resize(config.node_count);

    return config;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::kParse, std::string("config: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw IoError(IoError::Kind::kRange, std::string("config: ") + e.what());
  }
}

SimConfig load_sim_config(const std::filesystem::path& path) {
  return parse_sim_config(read_file(path), path.parent_path());
}

std::string serialize_sim_config(const SimConfig& config) {
  ordered_json j;
  j["format"] = kConfigFormat;
  j["version"] = kConfigVersion;
  j["node_count"] = config.node_count;
  j["run_cap_ticks"] = config.run_cap_ticks;
  j["seed"] = config.seed;
  j["single_tick_stepping"] = config.single_tick_stepping;
  j["calibration"] = calibration_to_json(config.cal);

  if (!config.program_file.empty()) {
    j["program_file"] = config.program_file;
  }
  if (!config.connectivity_file.empty()) {
    j["connectivity_file"] = config.connectivity_file;
  } else if (!config.connectivity.empty()) {
    ordered_json lines = ordered_json::array();
    std::istringstream canon(serialize_connectivity(config.connectivity));
    for (std::string line; std::getline(canon, line);) lines.push_back(line);
    j["connections"] = lines;
  }
  if (config.program_file.empty() && config.connectivity.empty() &&
      config.connectivity_file.empty()) {
    throw IoError(IoError::Kind::kParse,
                  "cannot serialize a config whose program has no file or connectivity");
  }

  ordered_json sources = ordered_json::array();
  for (std::size_t node = 0; node < config.sources.size(); ++node) {
    for (const SourceSpec& s : config.sources[node]) {
      ordered_json src;
      src["node"] = node;
      src["label"] = s.label.value();
      src["period_ticks"] = s.period_ticks;
      src["count"] = s.count;
      src["start_offset_ticks"] = s.start_offset_ticks;
      sources.push_back(src);
    }
  }
  if (!sources.empty()) j["sources"] = sources;

  ordered_json playback = ordered_json::array();
  for (std::size_t node = 0; node < config.playback.size(); ++node) {
    if (config.playback[node].empty()) continue;
    ordered_json pb;
    pb["node"] = node;
    ordered_json commands = ordered_json::array();
    for (const PlaybackCommand& c : config.playback[node].commands) {
      ordered_json cmd;
      switch (c.kind) {
        case PlaybackCommand::Kind::kBarrierSync:
          cmd["barrier_sync"] = true;
          break;
        case PlaybackCommand::Kind::kEmitSpikes:
          cmd["emit"] = {{"at", c.at_cycles}, {"events", group_to_json(c.group)}};
          break;
        case PlaybackCommand::Kind::kEndOfRealtime:
          cmd["end"] = {{"at", c.at_cycles}};
          break;
      }
      commands.push_back(cmd);
    }
    pb["commands"] = commands;
    playback.push_back(pb);
  }
  if (!playback.empty()) j["playback"] = playback;

  ordered_json barrier;
  if (config.barrier.participants) {
    ordered_json participants = ordered_json::array();
    for (std::uint8_t i = 0; i < kMaxNodes; ++i) {
      if (*config.barrier.participants & (1u << i)) participants.push_back(i);
    }
    barrier["participants"] = participants;
  }
  barrier["timeout_cycles"] = config.barrier.timeout_cycles;
  barrier["refractory_cycles"] = config.barrier.refractory_cycles;
  if (!config.barrier.skew.empty()) barrier["skew"] = config.barrier.skew;
  j["barrier"] = barrier;

  if (!config.lanes.empty()) {
    ordered_json lanes = ordered_json::array();
    auto link_to_json = [](const LinkParams& p) {
      ordered_json lj;
      lj["latency_ticks"] = p.latency_ticks;
      lj["cc_interval"] = p.cc_interval;
      lj["cc_length"] = p.cc_length;
      return lj;
    };
    for (std::size_t node = 0; node < config.lanes.size(); ++node) {
      const LaneOverrides& o = config.lanes[node];
      if (!o.chip_up && !o.chip_down && !o.mgt_up && !o.mgt_down) continue;
      ordered_json lane;
      lane["node"] = node;
      if (o.chip_up) lane["chip_up"] = link_to_json(*o.chip_up);
      if (o.chip_down) lane["chip_down"] = link_to_json(*o.chip_down);
      if (o.mgt_up) lane["mgt_up"] = link_to_json(*o.mgt_up);
      if (o.mgt_down) lane["mgt_down"] = link_to_json(*o.mgt_down);
      lanes.push_back(lane);
    }
    if (!lanes.empty()) j["lanes"] = lanes;
  }

  return j.dump(2) + "\n";
}

void store_sim_config(const SimConfig& config, const std::filesystem::path& path) {
  write_file(path, serialize_sim_config(config));
}

// ---------------------------------------------------------------------------
// Run report

namespace {

constexpr const char* kReportFormat = "fabricsim-report";
constexpr std::uint32_t kReportVersion = 1;

std::string trace_csv(const std::vector<TraceRecord>& records) {
  std::ostringstream out;
  out << "label,emitted_ns,arrived_ns\n";
  for (const TraceRecord& r : records) {
    out << r.label.value() << ',' << r.emitted_at.nanoseconds() << ','
        << r.arrived_at.nanoseconds() << '\n';
  }
  return out.str();
}

std::vector<TraceRecord> parse_trace_csv(const std::string& text,
                                         const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "label,emitted_ns,arrived_ns") {
    throw IoError(IoError::Kind::kParse, origin + ": bad trace header");
  }
  std::vector<TraceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::uint64_t label = 0, emitted = 0, arrived = 0;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> label >> c1 >> emitted >> c2 >> arrived) || c1 != ',' || c2 != ',') {
      throw IoError(IoError::Kind::kParse,
                    origin + " line " + std::to_string(line_no) + ": bad trace row", line_no);
    }
    records.push_back(TraceRecord{ChipLabel{static_cast<std::uint32_t>(label)},
                                  SimTime{arrived / kTickNs}, SimTime{emitted / kTickNs}});
  }
  return records;
}

}  // namespace

std::string serialize_run_summary(const RunReport& report) {
  ordered_json j;
  j["format"] = kReportFormat;
  j["version"] = kReportVersion;
  j["node_count"] = report.node_count;
  j["end_tick"] = report.end_tick;
  j["hit_run_cap"] = report.hit_run_cap;

  ordered_json barrier;
  barrier["sync_fired"] = report.sync_fired;
  barrier["sync_fire_tick"] = report.sync_fire_tick;
  barrier["timeout"] = report.barrier_timeout;
  barrier["ignored_requests"] = report.barrier_ignored_requests;
  ordered_json starts = ordered_json::array();
  for (const auto& s : report.rt_start) {
    if (s) {
      starts.push_back(*s);
    } else {
      starts.push_back(nullptr);
    }
  }
  barrier["rt_start_ticks"] = starts;
  j["barrier"] = barrier;

  ordered_json latency;
  latency["count"] = report.latency.count;
  latency["p1_ns"] = report.latency.p1_ns;
  latency["p50_ns"] = report.latency.p50_ns;
  latency["p99_ns"] = report.latency.p99_ns;
  latency["max_ns"] = report.latency.max_ns;
  j["latency"] = latency;

  ordered_json ledger;
  ledger["generated"] = report.ledger.generated;
  ledger["playback_injected"] = report.ledger.playback_injected;
  ledger["copy_surplus"] = report.ledger.copy_surplus;
  ledger["traced"] = report.ledger.traced;
  ledger["chip_egress_drops"] = report.ledger.chip_egress_drops;
  ledger["out_filtered"] = report.ledger.out_filtered;
  ledger["node_egress_drops"] = report.ledger.node_egress_drops;
  ledger["agg_unrouted"] = report.ledger.agg_unrouted;
  ledger["agg_copy_drops"] = report.ledger.agg_copy_drops;
  ledger["in_filtered"] = report.ledger.in_filtered;
  ledger["node_ingress_drops"] = report.ledger.node_ingress_drops;
  ledger["post_section"] = report.ledger.post_section;
  ledger["in_flight_at_end"] = report.ledger.in_flight_at_end;
  j["ledger"] = ledger;

  ordered_json nodes = ordered_json::array();
  for (const NodeCounters& c : report.node_counters) {
    ordered_json nc;
    nc["generated"] = c.generated;
    nc["chip_egress_drops"] = c.chip_egress_drops;
    nc["tapped"] = c.tapped;
    nc["out_filtered"] = c.out_filtered;
    nc["node_egress_drops"] = c.node_egress_drops;
    nc["in_filtered"] = c.in_filtered;
    nc["node_ingress_drops"] = c.node_ingress_drops;
    nc["jitter_misses"] = c.jitter_misses;
    nc["traced"] = c.traced;
    nc["node_egress_high_water"] = c.node_egress_high_water;
    nc["node_ingress_high_water"] = c.node_ingress_high_water;
    nodes.push_back(nc);
  }
  j["node_counters"] = nodes;

  ordered_json lanes = ordered_json::array();
  for (const LaneStats& lane : report.lanes) {
    ordered_json lj;
    lj["name"] = lane.name;
    lj["accepted"] = lane.accepted;
    lj["delivered"] = lane.delivered;
    lj["cc_pauses"] = lane.cc_pauses;
    lanes.push_back(lj);
  }
  j["lanes"] = lanes;

  return j.dump(2) + "\n";
}

void store_run_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "summary.json", serialize_run_summary(report));

  std::ostringstream hist;
  hist << "bin_ns,count\n";
  for (const auto& [bin, count] : report.histogram) {
    hist << bin << ',' << count << '\n';
  }
  write_file(dir / "histogram.csv", hist.str());

  for (std::uint8_t i = 0; i < report.node_count; ++i) {
    write_file(dir / ("trace_node" + std::to_string(i) + ".csv"), trace_csv(report.trace[i]));
  }
}

RunReport load_run_report(const std::filesystem::path& dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(dir / "summary.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(IoError::Kind::kParse, std::string("summary.json: ") + e.what());
  }

  try {
    if (j.value("format", "") != kReportFormat) {
      throw IoError(IoError::Kind::kParse, "summary.json: wrong format tag");
    }
    if (j.value("version", 0u) != kReportVersion) {
      throw IoError(IoError::Kind::kVersion, "summary.json: unsupported version");
    }

    RunReport report;
    report.node_count = j.at("node_count").get<std::uint8_t>();
    report.end_tick = j.at("end_tick").get<Tick>();
    report.hit_run_cap = j.at("hit_run_cap").get<bool>();

    const auto& barrier = j.at("barrier");
    report.sync_fired = barrier.at("sync_fired").get<bool>();
    report.sync_fire_tick = barrier.at("sync_fire_tick").get<Tick>();
    report.barrier_timeout = barrier.at("timeout").get<bool>();
    report.barrier_ignored_requests = barrier.at("ignored_requests").get<std::uint64_t>();
    for (const auto& s : barrier.at("rt_start_ticks")) {
      if (s.is_null()) {
        report.rt_start.push_back(std::nullopt);
      } else {
        report.rt_start.push_back(s.get<Tick>());
      }
    }

    const auto& latency = j.at("latency");
    report.latency.count = latency.at("count").get<std::uint64_t>();
    report.latency.p1_ns = latency.at("p1_ns").get<std::uint64_t>();
    report.latency.p50_ns = latency.at("p50_ns").get<std::uint64_t>();
    report.latency.p99_ns = latency.at("p99_ns").get<std::uint64_t>();
    report.latency.max_ns = latency.at("max_ns").get<std::uint64_t>();

    const auto& ledger = j.at("ledger");
    report.ledger.generated = ledger.at("generated").get<std::uint64_t>();
    report.ledger.playback_injected = ledger.at("playback_injected").get<std::uint64_t>();
    report.ledger.copy_surplus = ledger.at("copy_surplus").get<std::uint64_t>();
    report.ledger.traced = ledger.at("traced").get<std::uint64_t>();
    report.ledger.chip_egress_drops = ledger.at("chip_egress_drops").get<std::uint64_t>();
    report.ledger.out_filtered = ledger.at("out_filtered").get<std::uint64_t>();
    report.ledger.node_egress_drops = ledger.at("node_egress_drops").get<std::uint64_t>();
    report.ledger.agg_unrouted = ledger.at("agg_unrouted").get<std::uint64_t>();
    report.ledger.agg_copy_drops = ledger.at("agg_copy_drops").get<std::uint64_t>();
    report.ledger.in_filtered = ledger.at("in_filtered").get<std::uint64_t>();
    report.ledger.node_ingress_drops = ledger.at("node_ingress_drops").get<std::uint64_t>();
    report.ledger.post_section = ledger.at("post_section").get<std::uint64_t>();
    report.ledger.in_flight_at_end = ledger.at("in_flight_at_end").get<std::uint64_t>();

    for (const auto& nc : j.at("node_counters")) {
      NodeCounters c;
      c.generated = nc.at("generated").get<std::uint64_t>();
      c.chip_egress_drops = nc.at("chip_egress_drops").get<std::uint64_t>();
      c.tapped = nc.at("tapped").get<std::uint64_t>();
      c.out_filtered = nc.at("out_filtered").get<std::uint64_t>();
      c.node_egress_drops = nc.at("node_egress_drops").get<std::uint64_t>();
      c.in_filtered = nc.at("in_filtered").get<std::uint64_t>();
      c.node_ingress_drops = nc.at("node_ingress_drops").get<std::uint64_t>();
      c.jitter_misses = nc.at("jitter_misses").get<std::uint64_t>();
      c.traced = nc.at("traced").get<std::uint64_t>();
      c.node_egress_high_water = nc.at("node_egress_high_water").get<std::uint64_t>();
      c.node_ingress_high_water = nc.at("node_ingress_high_water").get<std::uint64_t>();
      report.node_counters.push_back(c);
    }
    for (const auto& lj : j.at("lanes")) {
      LaneStats lane;
      lane.name = lj.at("name").get<std::string>();
      lane.accepted = lj.at("accepted").get<std::uint64_t>();
      lane.delivered = lj.at("delivered").get<std::uint64_t>();
      lane.cc_pauses = lj.at("cc_pauses").get<std::uint64_t>();
      report.lanes.push_back(lane);
    }

    // histogram.csv
    {
      const std::string text = read_file(dir / "histogram.csv");
      std::istringstream in(text);
      std::string line;
      if (!std::getline(in, line) || line != "bin_ns,count") {
        throw IoError(IoError::Kind::kParse, "histogram.csv: bad header");
      }
      std::size_t line_no = 1;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::uint64_t bin = 0, count = 0;
        char comma = 0;
        std::istringstream row(line);
        if (!(row >> bin >> comma >> count) || comma != ',') {
          throw IoError(IoError::Kind::kParse,
                        "histogram.csv line " + std::to_string(line_no) + ": bad row", line_no);
        }
        report.histogram.emplace_back(bin, count);
      }
    }

    for (std::uint8_t i = 0; i < report.node_count; ++i) {
      const std::string name = "trace_node" + std::to_string(i) + ".csv";
      report.trace.push_back(parse_trace_csv(read_file(dir / name), name));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::kParse, std::string("summary.json: ") + e.what());
  }
}

}  // namespace fabricsim
