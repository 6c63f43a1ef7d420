#include "qcn/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <ostream>

#include "CLI11.hpp"
#include "qcn/error.hpp"
#include "qcn/io.hpp"
#include "qcn/quarry.hpp"
#include "qcn/render.hpp"
#include "qcn/synthesis.hpp"

namespace qcn {

namespace {

namespace fs = std::filesystem;

fs::path output_path(const std::string& given) {
  fs::path p(given);
  if (p.is_relative()) {
    if (const char* base = std::getenv("QCN_OUTPUT_DIR"); base != nullptr && *base != '\0') return fs::path(base) / p;
  }
  return p;
}

struct BuildArgs {
  std::string graph, out;
  double radius = 0.0;
};

struct SimulateArgs {
  std::string net, trace, init, mode = "discrete", conflict = "lowest";
  std::int64_t steps = 0, stride = 1;
  double theta = 1.0, delta = 1.0;
  std::uint64_t seed = 0;
};

struct RenderArgs {
  std::string net, trace, out_dir, format = "pgm";
  double scale = 8.0;
};

struct QuarryArgs {
  std::string config, trace, metrics, net;
  std::int64_t steps = 0, stride = 1;
  std::uint64_t seed = 0;
};

struct MetricsArgs {
  std::string config, trace, out;
};

int do_build(const BuildArgs& a, std::ostream& out) {
  const GraphDocument doc = parse_graph(read_file(a.graph));
  const NetTopology net = build_from_graph(doc.graph, a.radius, doc.rules);
  const auto path = output_path(a.out);
  write_file(path, serialize_net(net));
  out << "built " << net.size() << " cells -> " << path.string() << '\n';
  return 0;
}

int do_validate(const std::string& net_path, std::ostream& out) {
  try {
    const ParsedNet parsed = parse_net(read_file(net_path));
    out << "valid: " << parsed.net.size() << " cells\n";
    if (!parsed.report.empty()) out << format_report(parsed.report);
    return 0;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kValidationFailed) throw;
    out << "invalid\n" << e.what() << '\n';
    return 1;
  }
}

int do_simulate(const SimulateArgs& a, std::ostream& err) {
  const NetTopology net = parse_net(read_file(a.net)).net;
  RunOptions options;
  options.mode = a.mode == "continuous" ? Mode::kContinuous : Mode::kDiscrete;
  options.steps = a.steps;
  options.theta = a.theta;
  options.delta = a.delta;
  options.seed = a.seed;
  options.stride = a.stride;
  options.conflict_policy = a.conflict == "random" ? ConflictPolicy::kSeededRandom : ConflictPolicy::kLowestId;

  NetState state = a.init.empty() ? (options.mode == Mode::kDiscrete ? NetState::discrete(net) : NetState::continuous(net))
                                  : parse_initial_state(read_file(a.init), net, options.mode);
  const Trace trace = run(net, state, options);
  for (const auto& w : trace.warnings) err << "warning: " << w << '\n';
  write_file(output_path(a.trace), export_trace(trace, net, a.stride));
  return 0;
}

int do_render(const RenderArgs& a, std::ostream& out) {
  const NetTopology net = parse_net(read_file(a.net)).net;
  const Trace trace = import_trace(std::string_view(read_file(a.trace)), net);
  RenderOptions options;
  options.format = a.format == "ascii" ? FrameFormat::kAscii : FrameFormat::kPgm;
  options.pixels_per_unit = a.scale;
  const auto frames = render_frames(net, trace, options, output_path(a.out_dir));
  out << "wrote " << frames.size() << " frames\n";
  return 0;
}

int do_quarry(const QuarryArgs& a, std::ostream& err) {
  const QuarryConfig config = parse_quarry_config(read_file(a.config));
  const QuarryRun result = run_quarry(config, a.steps, a.seed, a.stride);
  for (const auto& w : result.trace.warnings) err << "warning: " << w << '\n';
  write_file(output_path(a.trace), export_trace(result.trace, result.net, a.stride));
  write_file(output_path(a.metrics), export_metrics(compute_metrics(result.trace, config)));
  if (!a.net.empty()) write_file(output_path(a.net), serialize_net(result.net));
  return 0;
}

int do_metrics(const MetricsArgs& a) {
  const QuarryConfig config = parse_quarry_config(read_file(a.config));
  const QuarryScenario scenario = build_quarry(config);
  const Trace trace = import_trace(std::string_view(read_file(a.trace)), scenario.net);
  write_file(output_path(a.out), export_metrics(compute_metrics(trace, config)));
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quasi cellular net simulator", "qcn"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "Synthesize a net from a graph file");
  build_cmd->add_option("--graph", build.graph, "Graph file")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--radius", build.radius, "Cell radius")->required()->check(CLI::PositiveNumber);
  build_cmd->add_option("--out", build.out, "Output net file")->required();

  std::string validate_net;
  auto* validate_cmd = app.add_subcommand("validate", "Check a net file");
  validate_cmd->add_option("--net", validate_net, "Net file")->required()->check(CLI::ExistingFile);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the circulation and write a trace");
  sim_cmd->add_option("--net", sim.net, "Net file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--steps", sim.steps, "Number of steps")->required()->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--theta", sim.theta, "Step length")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--mode", sim.mode, "discrete or continuous")->check(CLI::IsMember({"discrete", "continuous"}));
  sim_cmd->add_option("--delta", sim.delta, "Continuous transfer fraction")->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--seed", sim.seed, "Random seed");
  sim_cmd->add_option("--stride", sim.stride, "Snapshot stride")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--conflict", sim.conflict, "lowest or random")->check(CLI::IsMember({"lowest", "random"}));
  sim_cmd->add_option("--init", sim.init, "Initial state file")->check(CLI::ExistingFile);
  sim_cmd->add_option("--trace", sim.trace, "Output trace file")->required();

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Draw trace snapshots as frames");
  render_cmd->add_option("--net", render.net, "Net file")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--trace", render.trace, "Trace file")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--format", render.format, "ascii or pgm")->check(CLI::IsMember({"ascii", "pgm"}));
  render_cmd->add_option("--scale", render.scale, "Pixels per length unit")->check(CLI::PositiveNumber);
  render_cmd->add_option("--out-dir", render.out_dir, "Frame directory")->required();

  QuarryArgs quarry;
  auto* quarry_cmd = app.add_subcommand("quarry", "Run a quarry scenario");
  quarry_cmd->add_option("--config", quarry.config, "Quarry config file")->required()->check(CLI::ExistingFile);
  quarry_cmd->add_option("--steps", quarry.steps, "Number of steps")->required()->check(CLI::NonNegativeNumber);
  quarry_cmd->add_option("--seed", quarry.seed, "Random seed");
  quarry_cmd->add_option("--stride", quarry.stride, "Snapshot stride")->check(CLI::PositiveNumber);
  quarry_cmd->add_option("--trace", quarry.trace, "Output trace file")->required();
  quarry_cmd->add_option("--metrics", quarry.metrics, "Output metrics file")->required();
  quarry_cmd->add_option("--net", quarry.net, "Also write the synthesized net");

  MetricsArgs metrics;
  auto* metrics_cmd = app.add_subcommand("metrics", "Recompute quarry metrics from a trace");
  metrics_cmd->add_option("--config", metrics.config, "Quarry config the trace was run with")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--trace", metrics.trace, "Trace file")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--out", metrics.out, "Output metrics file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << "run 'qcn --help' for usage\n";
    return 2;
  }

  try {
    if (*build_cmd) return do_build(build, out);
    if (*validate_cmd) return do_validate(validate_net, out);
    if (*sim_cmd) return do_simulate(sim, err);
    if (*render_cmd) return do_render(render, out);
    if (*quarry_cmd) return do_quarry(quarry, err);
    if (*metrics_cmd) return do_metrics(metrics);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace qcn
