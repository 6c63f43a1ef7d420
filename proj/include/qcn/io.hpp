#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "qcn/circulation.hpp"
#include "qcn/net_core.hpp"
#include "qcn/quarry.hpp"
#include "qcn/synthesis.hpp"

namespace qcn {

// Shortest decimal text that parses back to the same double.
std::string format_real(double value);
double parse_real(std::string_view text);

// Net files are JSON documents ("format": "qcn-net"). Serialization is canonical:
// equal nets always produce identical bytes.
std::string serialize_net(const NetTopology& net);

struct ParsedNet {
  NetTopology net;
  ValidationReport report;  // warnings only; invalid nets throw
};

// Throws Error(kSyntaxError) with a line number, or Error(kValidationFailed) with the report.
ParsedNet parse_net(std::string_view document);

// FNV-1a 64 of the canonical serialization, as 16 hex digits.
std::string net_hash(const NetTopology& net);

struct GraphDocument {
  BasicGraph graph;
  std::vector<BranchRule> rules;

  bool operator==(const GraphDocument&) const = default;
};

std::string serialize_graph(const GraphDocument& graph);
GraphDocument parse_graph(std::string_view document);

std::string serialize_quarry_config(const QuarryConfig& config);
QuarryConfig parse_quarry_config(std::string_view document);

// Initial occupancy: {"tokens": [{"cell": 0, "payload": {...}}], "levels": [{"cell": 0, "level": 1.5}]}.
NetState parse_initial_state(std::string_view document, const NetTopology& net, Mode mode);

// Delimited text. Header rows, then one record per retained step:
//   R,<k>                       record for time index k
//   E,<s>,<kind>,<cell>,<target>,<reason>,<amount>,<payload>   events of step s = k - 1
//   S,<k>,<cell>,<T|N|L>,<level>,<payload>                     state at time index k
// Snapshots are kept every `stride` steps plus the final step; events are always complete.
void export_trace(const Trace& trace, const NetTopology& net, std::int64_t stride, std::ostream& out);
std::string export_trace(const Trace& trace, const NetTopology& net, std::int64_t stride);

// Throws Error(kHashMismatch) when the trace was produced on a different net.
Trace import_trace(std::istream& in, const NetTopology& net);
Trace import_trace(std::string_view text, const NetTopology& net);

std::string export_metrics(const QuarryMetrics& metrics);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace qcn
