#include "qcn/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "qcn/error.hpp"

namespace qcn {

using nlohmann::json;

std::string format_real(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc{}) throw Error(ErrorKind::kInvalidArgument, "cannot format number");
  return std::string(buffer, end);
}

double parse_real(std::string_view text) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorKind::kSyntaxError, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

namespace {

std::int64_t parse_int(std::string_view text) {
  std::int64_t value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorKind::kSyntaxError, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::uint64_t parse_uint(std::string_view text) {
  std::uint64_t value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorKind::kSyntaxError, "not an unsigned integer: '" + std::string(text) + "'");
  }
  return value;
}

json position_json(const Eigen::Vector3d& p) { return json::array({p.x(), p.y(), p.z()}); }

Eigen::Vector3d parse_position(const json& j) {
  if (!j.is_array() || (j.size() != 2 && j.size() != 3)) {
    throw Error(ErrorKind::kSyntaxError, "position must be an array of 2 or 3 numbers");
  }
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.size() == 3 ? j.at(2).get<double>() : 0.0};
}

json payload_json(const Payload& p) {
  json j = json::object();
  for (const auto& [k, v] : p.values) j[k] = v;
  return j;
}

Payload parse_payload(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kSyntaxError, "payload must be an object");
  Payload p;
  for (const auto& [k, v] : j.items()) p.set(k, v.get<double>());
  return p;
}

json function_json(const GenerationFunction& f) {
  if (const auto* c = std::get_if<ConstantRate>(&f)) return {{"type", "constant"}, {"rate", c->rate}};
  if (const auto* p = std::get_if<PeriodicRate>(&f)) {
    return {{"type", "periodic"}, {"period", p->period}, {"amount", p->amount}};
  }
  json amounts = json::array();
  for (const auto& [step, amount] : std::get<TableRate>(f).amounts) amounts.push_back(json::array({step, amount}));
  return {{"type", "table"}, {"amounts", amounts}};
}

GenerationFunction parse_function(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "constant") return ConstantRate{j.at("rate").get<double>()};
  if (type == "periodic") return PeriodicRate{j.at("period").get<std::int64_t>(), j.at("amount").get<double>()};
  if (type == "table") {
    TableRate t;
    for (const auto& row : j.at("amounts")) t.amounts[row.at(0).get<std::int64_t>()] = row.at(1).get<double>();
    return t;
  }
  throw Error(ErrorKind::kSyntaxError, "unknown generation function '" + type + "'");
}

json kind_json(const CellKind& kind) {
  if (const auto* g = std::get_if<GeneratorSpec>(&kind)) {
    return {{"type", "generator"}, {"function", function_json(g->function)}, {"template", payload_json(g->payload_template)}};
  }
  if (const auto* t = std::get_if<TurnstileSpec>(&kind)) return {{"type", "turnstile"}, {"tau", t->tau}};
  return {{"type", std::string(kind_name(kind))}};
}

CellKind parse_kind(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "regular") return RegularCell{};
  if (type == "outflow") return OutflowCell{};
  if (type == "turnstile") return TurnstileSpec{j.at("tau").get<double>()};
  if (type == "generator") {
    GeneratorSpec g;
    g.function = parse_function(j.at("function"));
    if (j.contains("template")) g.payload_template = parse_payload(j.at("template"));
    return g;
  }
  throw Error(ErrorKind::kSyntaxError, "unknown cell kind '" + type + "'");
}

// Runs `body`, translating JSON failures into SyntaxError with a line number when known.
template <typename Fn>
auto with_json_errors(std::string_view document, Fn&& body) {
  try {
    return body();
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, document.size());
    const auto line = 1 + std::count(document.begin(), document.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(ErrorKind::kSyntaxError, "line " + std::to_string(line) + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSyntaxError, e.what());
  }
}

void expect_format(const json& j, std::string_view format) {
  if (!j.is_object() || !j.contains("format") || j.at("format").get<std::string>() != format) {
    throw Error(ErrorKind::kSyntaxError, "expected a '" + std::string(format) + "' document");
  }
}

json graph_json(const GraphDocument& doc) {
  json vertices = json::array();
  for (const auto& v : doc.graph.vertices) vertices.push_back({{"id", v.id}, {"position", position_json(v.position)}});
  json edges = json::array();
  for (const auto& e : doc.graph.edges) {
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"lanes", e.lanes},
                     {"separator", e.separator},
                     {"bidirectional", e.bidirectional},
                     {"lane_change_probability", e.lane_change_probability}});
  }
  json rules = json::array();
  for (const auto& r : doc.rules) {
    json branches = json::array();
    for (const auto& b : r.branches) branches.push_back({{"edge", b.edge}, {"p", b.probability}});
    rules.push_back({{"vertex", r.vertex}, {"branches", branches}});
  }
  return {{"vertices", vertices}, {"edges", edges}, {"branch_rules", rules}};
}

GraphDocument parse_graph_json(const json& j) {
  GraphDocument doc;
  for (const auto& v : j.at("vertices")) {
    doc.graph.vertices.push_back({v.at("id").get<std::int64_t>(), parse_position(v.at("position"))});
  }
  for (const auto& e : j.at("edges")) {
    Edge edge;
    edge.from = e.at("from").get<std::int64_t>();
    edge.to = e.at("to").get<std::int64_t>();
    edge.lanes = e.value("lanes", 1);
    edge.separator = e.value("separator", false);
    edge.bidirectional = e.value("bidirectional", false);
    edge.lane_change_probability = e.value("lane_change_probability", 0.0);
    doc.graph.edges.push_back(edge);
  }
  if (j.contains("branch_rules")) {
    for (const auto& r : j.at("branch_rules")) {
      BranchRule rule;
      rule.vertex = r.at("vertex").get<std::int64_t>();
      for (const auto& b : r.at("branches")) rule.branches.push_back({b.at("edge").get<std::size_t>(), b.at("p").get<double>()});
      doc.rules.push_back(std::move(rule));
    }
  }
  return doc;
}

}  // namespace

std::string serialize_net(const NetTopology& net) {
  json cells = json::array();
  for (const Cell& c : net.cells()) {
    json directions = json::array();
    for (const auto& d : c.directions) directions.push_back({{"delta", position_json(d.delta)}, {"p", d.probability}});
    cells.push_back({{"id", c.id},
                     {"position", position_json(c.position)},
                     {"kind", kind_json(c.kind)},
                     {"directions", directions},
                     {"payload_schema", c.payload_schema}});
  }
  json separators = json::array();
  for (const auto& [a, b] : net.separators()) separators.push_back(json::array({a, b}));
  json doc = {{"format", "qcn-net"},
              {"version", 1},
              {"radius", net.radius()},
              {"position_tolerance", net.position_tolerance()},
              {"cells", cells},
              {"separator_pairs", separators}};
  return doc.dump(1) + "\n";
}

ParsedNet parse_net(std::string_view document) {
  auto net = with_json_errors(document, [&] {
    const json j = json::parse(document);
    expect_format(j, "qcn-net");
    std::vector<Cell> cells;
    for (const auto& cj : j.at("cells")) {
      Cell c;
      c.id = cj.at("id").get<CellId>();
      c.position = parse_position(cj.at("position"));
      c.kind = cj.contains("kind") ? parse_kind(cj.at("kind")) : CellKind{RegularCell{}};
      if (cj.contains("directions")) {
        for (const auto& dj : cj.at("directions")) {
          c.directions.push_back({parse_position(dj.at("delta")), dj.at("p").get<double>()});
        }
      }
      if (cj.contains("payload_schema")) c.payload_schema = cj.at("payload_schema").get<std::vector<std::string>>();
      cells.push_back(std::move(c));
    }
    SeparatorSet separators;
    if (j.contains("separator_pairs")) {
      for (const auto& p : j.at("separator_pairs")) separators.insert(make_pair_key(p.at(0).get<CellId>(), p.at(1).get<CellId>()));
    }
    std::optional<double> tolerance;
    if (j.contains("position_tolerance")) tolerance = j.at("position_tolerance").get<double>();
    return NetTopology(j.at("radius").get<double>(), std::move(cells), std::move(separators), tolerance);
  });
  ValidationReport report = validate_static_structure(net);
  if (!report.valid()) throw Error(ErrorKind::kValidationFailed, format_report(report));
  return {std::move(net), std::move(report)};
}

std::string net_hash(const NetTopology& net) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : serialize_net(net)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string serialize_graph(const GraphDocument& graph) {
  json doc = graph_json(graph);
  doc["format"] = "qcn-graph";
  doc["version"] = 1;
  return doc.dump(1) + "\n";
}

GraphDocument parse_graph(std::string_view document) {
  return with_json_errors(document, [&] {
    const json j = json::parse(document);
    expect_format(j, "qcn-graph");
    return parse_graph_json(j);
  });
}

std::string serialize_quarry_config(const QuarryConfig& config) {
  json excavators = json::array();
  for (const auto& ex : config.excavators) {
    const auto& c = ex.load.composition;
    excavators.push_back({{"cell", ex.cell},
                          {"loading_time", ex.loading_time},
                          {"load",
                           {{"volume", ex.load.volume},
                            {"composition",
                             {{"clear_sand", c.clear_sand}, {"water", c.water}, {"stones", c.stones}, {"clay", c.clay}}}}}});
  }
  json boundary;
  if (const auto* loop = std::get_if<ClosedLoop>(&config.boundary)) {
    boundary = {{"type", "closed_loop"}, {"tippers", loop->tipper_count}};
  } else {
    const auto& open = std::get<OpenBoundary>(config.boundary);
    boundary = {{"type", "open"}, {"entrance", open.entrance}, {"exit", open.exit}, {"arrivals", function_json(open.arrivals)}};
  }
  const auto& k = config.costs;
  json doc = {{"format", "qcn-quarry"},
              {"version", 1},
              {"radius", config.radius},
              {"theta", config.theta},
              {"graph", graph_json({config.haul_graph, config.rules})},
              {"excavators", excavators},
              {"dump_sites", config.dump_sites},
              {"boundary", boundary},
              {"costs",
               {{"fuel_per_move", k.fuel_per_move},
                {"emission_per_move", k.emission_per_move},
                {"fuel_per_idle", k.fuel_per_idle},
                {"emission_per_idle", k.emission_per_idle}}}};
  return doc.dump(1) + "\n";
}

QuarryConfig parse_quarry_config(std::string_view document) {
  return with_json_errors(document, [&] {
    const json j = json::parse(document);
    expect_format(j, "qcn-quarry");
    QuarryConfig config;
    config.radius = j.at("radius").get<double>();
    config.theta = j.value("theta", 1.0);
    auto graph = parse_graph_json(j.at("graph"));
    config.haul_graph = std::move(graph.graph);
    config.rules = std::move(graph.rules);
    for (const auto& ej : j.at("excavators")) {
      ExcavatorSite ex;
      ex.cell = ej.at("cell").get<CellId>();
      ex.loading_time = ej.at("loading_time").get<double>();
      const auto& load = ej.at("load");
      ex.load.volume = load.at("volume").get<double>();
      const auto& c = load.at("composition");
      ex.load.composition = {c.value("clear_sand", 0.0), c.value("water", 0.0), c.value("stones", 0.0), c.value("clay", 0.0)};
      config.excavators.push_back(ex);
    }
    config.dump_sites = j.at("dump_sites").get<std::vector<CellId>>();
    const auto& b = j.at("boundary");
    const auto type = b.at("type").get<std::string>();
    if (type == "closed_loop") {
      config.boundary = ClosedLoop{b.at("tippers").get<int>()};
    } else if (type == "open") {
      config.boundary = OpenBoundary{b.at("entrance").get<CellId>(), parse_function(b.at("arrivals")), b.at("exit").get<CellId>()};
    } else {
      throw Error(ErrorKind::kSyntaxError, "unknown boundary type '" + type + "'");
    }
    if (j.contains("costs")) {
      const auto& k = j.at("costs");
      config.costs = {k.value("fuel_per_move", 0.0), k.value("emission_per_move", 0.0), k.value("fuel_per_idle", 0.0),
                      k.value("emission_per_idle", 0.0)};
    }
    return config;
  });
}

NetState parse_initial_state(std::string_view document, const NetTopology& net, Mode mode) {
  return with_json_errors(document, [&] {
    const json j = json::parse(document);
    NetState state = mode == Mode::kDiscrete ? NetState::discrete(net) : NetState::continuous(net);
    if (j.contains("tokens")) {
      for (const auto& t : j.at("tokens")) {
        Payload p = t.contains("payload") ? parse_payload(t.at("payload")) : Payload{};
        state.set_cell_state(t.at("cell").get<CellId>(), Transitable{std::move(p)});
      }
    }
    if (j.contains("levels")) {
      for (const auto& l : j.at("levels")) state.set_cell_state(l.at("cell").get<CellId>(), ContinuousLevel{l.at("level").get<double>()});
    }
    return state;
  });
}

namespace {

void check_field(std::string_view text) {
  if (text.find_first_of(",;=\n\r") != std::string_view::npos) {
    throw Error(ErrorKind::kInvalidArgument, "trace field contains a delimiter: '" + std::string(text) + "'");
  }
}

std::string payload_field(const Payload& p) {
  std::string out;
  for (const auto& [k, v] : p.values) {
    check_field(k);
    if (!out.empty()) out += ';';
    out += k;
    out += '=';
    out += format_real(v);
  }
  return out;
}

Payload parse_payload_field(std::string_view text) {
  Payload p;
  while (!text.empty()) {
    const auto end = text.find(';');
    const auto item = text.substr(0, end);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::kSyntaxError, "malformed payload item");
    p.set(std::string(item.substr(0, eq)), parse_real(item.substr(eq + 1)));
    if (end == std::string_view::npos) break;
    text.remove_prefix(end + 1);
  }
  return p;
}

std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  while (true) {
    const auto pos = line.find(delimiter);
    fields.push_back(line.substr(0, pos));
    if (pos == std::string_view::npos) return fields;
    line.remove_prefix(pos + 1);
  }
}

}  // namespace

void export_trace(const Trace& trace, const NetTopology& net, std::int64_t stride, std::ostream& out) {
  if (stride < 1) throw Error(ErrorKind::kInvalidArgument, "stride must be >= 1");
  const auto& h = trace.header;
  out << "qcn-trace,1\n";
  out << "net_hash," << net_hash(net) << '\n';
  out << "theta," << format_real(h.theta) << '\n';
  out << "mode," << to_string(h.mode) << '\n';
  out << "seed," << h.seed << '\n';
  out << "steps," << h.steps << '\n';
  out << "stride," << stride << '\n';

  auto event = trace.events.begin();
  auto snapshot = trace.snapshots.begin();
  for (std::int64_t k = 0; k <= h.steps; ++k) {
    out << "R," << k << '\n';
    for (; event != trace.events.end() && event->step == k - 1; ++event) {
      check_field(event->reason);
      out << "E," << event->step << ',' << to_string(event->kind) << ',' << event->cell << ',';
      if (event->target) out << *event->target;
      out << ',' << event->reason << ',' << format_real(event->amount) << ','
          << (event->payload ? payload_field(*event->payload) : std::string("-")) << '\n';
    }
    while (snapshot != trace.snapshots.end() && snapshot->step < k) ++snapshot;
    if (snapshot != trace.snapshots.end() && snapshot->step == k && (k % stride == 0 || k == h.steps)) {
      out << "P," << k << ',' << snapshot->cells.size() << '\n';
      for (const auto& c : snapshot->cells) {
        const char tag = h.mode == Mode::kContinuous ? 'L' : (c.occupied ? 'T' : 'N');
        out << "S," << k << ',' << c.cell << ',' << tag << ',' << format_real(c.level) << ','
            << payload_field(c.payload) << '\n';
      }
    }
  }
  if (event != trace.events.end()) throw Error(ErrorKind::kInvalidArgument, "trace events out of step order");
}

std::string export_trace(const Trace& trace, const NetTopology& net, std::int64_t stride) {
  std::ostringstream os;
  export_trace(trace, net, stride, os);
  return os.str();
}

Trace import_trace(std::istream& in, const NetTopology& net) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t record = -1;
  bool have_hash = false;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split(line, ',');
      const auto& tag = f[0];
      auto need = [&](std::size_t n) {
        if (f.size() != n) throw Error(ErrorKind::kSyntaxError, "expected " + std::to_string(n) + " fields");
      };
      if (tag == "qcn-trace") {
        need(2);
        if (f[1] != "1") throw Error(ErrorKind::kSyntaxError, "unsupported trace version");
      } else if (tag == "net_hash") {
        need(2);
        trace.header.net_hash = std::string(f[1]);
        have_hash = true;
        if (trace.header.net_hash != net_hash(net)) {
          throw Error(ErrorKind::kHashMismatch, "trace was recorded on net " + trace.header.net_hash +
                                                    ", given net is " + net_hash(net));
        }
      } else if (tag == "theta") {
        need(2);
        trace.header.theta = parse_real(f[1]);
      } else if (tag == "mode") {
        need(2);
        if (f[1] != "discrete" && f[1] != "continuous") throw Error(ErrorKind::kSyntaxError, "unknown mode");
        trace.header.mode = f[1] == "discrete" ? Mode::kDiscrete : Mode::kContinuous;
      } else if (tag == "seed") {
        need(2);
        trace.header.seed = parse_uint(f[1]);
      } else if (tag == "steps") {
        need(2);
        trace.header.steps = parse_int(f[1]);
      } else if (tag == "stride") {
        need(2);
        parse_int(f[1]);
      } else if (tag == "R") {
        need(2);
        const auto k = parse_int(f[1]);
        if (k != record + 1) throw Error(ErrorKind::kSyntaxError, "records must be strictly ordered by step");
        record = k;
      } else if (tag == "E") {
        need(8);
        TraceEvent e;
        e.step = parse_int(f[1]);
        if (e.step != record - 1) throw Error(ErrorKind::kSyntaxError, "event outside its record");
        const auto kind = parse_event_kind(f[2]);
        if (!kind) throw Error(ErrorKind::kSyntaxError, "unknown event kind '" + std::string(f[2]) + "'");
        e.kind = *kind;
        e.cell = static_cast<CellId>(parse_uint(f[3]));
        if (!f[4].empty()) e.target = static_cast<CellId>(parse_uint(f[4]));
        e.reason = std::string(f[5]);
        e.amount = parse_real(f[6]);
        if (f[7] != "-") e.payload = parse_payload_field(f[7]);
        trace.events.push_back(std::move(e));
      } else if (tag == "P") {
        need(3);
        if (parse_int(f[1]) != record) throw Error(ErrorKind::kSyntaxError, "snapshot outside its record");
        trace.snapshots.push_back({record, {}});
        trace.snapshots.back().cells.reserve(parse_uint(f[2]));
      } else if (tag == "S") {
        need(6);
        if (trace.snapshots.empty() || parse_int(f[1]) != trace.snapshots.back().step || record != trace.snapshots.back().step) {
          throw Error(ErrorKind::kSyntaxError, "snapshot row without a snapshot header");
        }
        CellRecord c;
        c.cell = static_cast<CellId>(parse_uint(f[2]));
        if (f[3] != "T" && f[3] != "N" && f[3] != "L") throw Error(ErrorKind::kSyntaxError, "unknown state tag");
        c.occupied = f[3] == "T";
        c.level = parse_real(f[4]);
        c.payload = parse_payload_field(f[5]);
        trace.snapshots.back().cells.push_back(std::move(c));
      } else {
        throw Error(ErrorKind::kSyntaxError, "unknown row type '" + std::string(tag) + "'");
      }
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kHashMismatch) throw;
    throw Error(ErrorKind::kSyntaxError, "line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!have_hash) throw Error(ErrorKind::kSyntaxError, "trace has no net_hash header");
  if (record != trace.header.steps) throw Error(ErrorKind::kSyntaxError, "trace is truncated");
  for (const auto& s : trace.snapshots) {
    for (const auto& c : s.cells) {
      if (c.cell >= net.size()) throw Error(ErrorKind::kSyntaxError, "snapshot references a missing cell");
    }
  }
  return trace;
}

Trace import_trace(std::string_view text, const NetTopology& net) {
  std::istringstream in{std::string(text)};
  return import_trace(in, net);
}

std::string export_metrics(const QuarryMetrics& m) {
  std::ostringstream os;
  os << "metric,key,value\n";
  os << "steps,," << m.steps << '\n';
  os << "loads_completed,," << m.loads_completed << '\n';
  os << "loads_per_step,," << format_real(m.loads_per_step) << '\n';
  os << "deliveries,," << m.deliveries << '\n';
  os << "delivered_volume,," << format_real(m.delivered_volume) << '\n';
  os << "mean_cycle_time,," << format_real(m.mean_cycle_time) << '\n';
  os << "throughput,," << format_real(m.throughput) << '\n';
  for (const auto& [k, v] : m.delivered_mass) os << "delivered_mass," << k << ',' << format_real(v) << '\n';
  for (const auto& [k, v] : m.utilization) os << "utilization," << k << ',' << format_real(v) << '\n';
  for (const auto& [k, v] : m.mean_queue_length) os << "mean_queue_length," << k << ',' << format_real(v) << '\n';
  return os.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kInvalidArgument, "cannot write " + path.string());
  out << contents;
}

}  // namespace qcn
