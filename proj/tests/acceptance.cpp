// Acceptance run: one PASS/FAIL line per criterion.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "qcn/cli.hpp"
#include "qcn/io.hpp"
#include "qcn/quarry.hpp"
#include "qcn/synthesis.hpp"
#include "quarry_fixtures.hpp"

using namespace qcn;
namespace fs = std::filesystem;

namespace {

const std::set<int> kKnownUnattainable = {5, 9};

struct Outcome {
  bool pass = true;
  bool attainable_part_ok = true;  // only meaningful for known-unattainable criteria
  std::string detail;
};

int unexpected = 0;

void report(int id, const char* title, const Outcome& o) {
  const bool known = kKnownUnattainable.count(id) != 0;
  std::printf("[%s] criterion %2d  %-28s %s%s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              !o.pass && known ? "  (known ceiling)" : "");
  if (!o.pass && !known) ++unexpected;
  if (known && !o.attainable_part_ok) ++unexpected;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome ring_circulation() {
  Outcome o;
  for (std::size_t n : {4u, 8u, 16u}) {
    const NetTopology ring = testing::make_ring(n);
    NetState s = NetState::discrete(ring);
    s.set_cell_state(0, Transitable{});
    RunOptions options;
    options.steps = static_cast<std::int64_t>(3 * n);
    const Trace t = run(ring, s, options);
    for (std::size_t k = 0; k < t.snapshots.size(); ++k) {
      const auto& cells = t.snapshots[k].cells;
      if (cells.size() != 1 || cells[0].cell != k % n) o.pass = false;
    }
  }
  o.detail = "n=4,8,16 period n; prefix a-d = cells 0,1,2,3";
  return o;
}

Outcome discrete_conservation() {
  Outcome o;
  std::mt19937_64 rng(1001);
  std::size_t largest = 0;
  for (int net_index = 0; net_index < 100; ++net_index) {
    const NetTopology net = testing::make_random_closed_net(rng, 500);
    largest = std::max(largest, net.size());
    NetState s = NetState::discrete(net);
    std::bernoulli_distribution fill(0.35);
    for (CellId i = 0; i < net.size(); ++i) {
      if (fill(rng)) s.set_cell_state(i, Transitable{});
    }
    const auto tokens = s.transitable_count();
    SimulationClock clock;
    Rng step_rng(static_cast<std::uint64_t>(net_index));
    for (int step = 0; step < 1000; ++step) {
      apply_discrete_step(net, s, clock, step_rng);
      if (s.transitable_count() != tokens) o.pass = false;
    }
  }
  o.detail = fmt("100 nets (<= %zu cells) x 1000 steps, count constant", largest);
  return o;
}

Outcome continuous_conservation() {
  Outcome o;
  std::mt19937_64 rng(2002);
  double worst = 0.0;
  double lowest = 0.0;
  for (int net_index = 0; net_index < 12; ++net_index) {
    const NetTopology net = net_index == 0 ? testing::make_ring(3) : testing::make_random_closed_net(rng, 400);
    NetState s = NetState::continuous(net);
    std::uniform_real_distribution<double> level(0.0, 10.0);
    for (CellId i = 0; i < net.size(); ++i) s.levels(static_cast<Eigen::Index>(i)) = level(rng);
    const double total = s.total_level();
    SimulationClock clock;
    const double delta = 0.05 + 0.4 * net_index;
    for (int step = 0; step < 10000; ++step) {
      apply_continuous_step(net, s, clock, delta);
      worst = std::max(worst, std::abs(s.total_level() - total));
      lowest = std::min(lowest, s.levels.minCoeff());
    }
  }
  o.pass = worst <= 1e-9 && lowest >= 0.0;
  o.detail = fmt("12 nets x 10^4 steps, max drift %.3g, min level %.3g", worst, lowest);
  return o;
}

Outcome turnstile_timing() {
  Outcome o;
  std::string measured;
  for (double theta : {1.0, 0.1}) {
    for (int m : {1, 2, 5, 10}) {
      auto cells = testing::chain_cells(5);
      cells[2].kind = TurnstileSpec{m * theta};
      const NetTopology net(1.0, cells);
      NetState s = NetState::discrete(net);
      s.set_cell_state(0, Transitable{});
      SimulationClock clock{theta, 0};
      Rng rng(0);
      std::int64_t closed = -1, released = -1;
      while (released < 0 && clock.step < 100) {
        const auto step = clock.step;
        for (const auto& e : apply_discrete_step(net, s, clock, rng)) {
          if (e.kind == EventKind::kTurnstileClosed) closed = step;
          if (e.kind == EventKind::kMoved && e.cell == 2) released = step;
        }
      }
      if (released - closed != m) o.pass = false;
      if (theta == 1.0) measured += fmt("%s%lld", measured.empty() ? "" : ",", static_cast<long long>(released - closed));
    }
  }
  o.detail = "hold for m=1,2,5,10 (theta 1 and 0.1): " + measured;
  return o;
}

Outcome generator_balance() {
  Outcome o;
  const NetTopology net = testing::make_open_chain(10);
  NetState s = NetState::discrete(net);
  SimulationClock clock;
  Rng rng(0);
  const int warmup = 100, window = 1000;
  std::int64_t absorbed_in_window = 0;
  bool every_step_one = true;
  for (int step = 0; step < warmup + window; ++step) {
    std::int64_t absorbed = 0;
    for (const auto& e : apply_discrete_step(net, s, clock, rng)) absorbed += e.kind == EventKind::kAbsorbed;
    if (s.generated - s.absorbed_count() - static_cast<std::int64_t>(s.transitable_count()) != 0) {
      o.attainable_part_ok = false;
    }
    if (step >= warmup) {
      absorbed_in_window += absorbed;
      if (absorbed != 1) every_step_one = false;
    }
  }
  o.pass = every_step_one && o.attainable_part_ok;
  o.detail = fmt("absorbed/step %.4f (target 1); balance %s", static_cast<double>(absorbed_in_window) / window,
                 o.attainable_part_ok ? "exact every step" : "BROKEN");
  return o;
}

Outcome branch_probability() {
  Outcome o;
  BasicGraph g;
  g.vertices = {{0, Position(0, 0, 0)}, {1, Position(6, 0, 0)}, {2, Position(12, 4, 0)}, {3, Position(12, -4, 0)}};
  g.edges = {{0, 1}, {1, 2}, {1, 3}};
  const std::vector<BranchRule> rules{{1, {{1, 0.7}, {2, 0.3}}}};
  NetTopology net = build_from_graph(g, 1.0, rules);
  const CellId junction = 1;
  const std::vector<std::pair<CellId, CellKind>> kinds{{0, GeneratorSpec{ConstantRate{1.0}, {}}}, {2, OutflowCell{}}, {3, OutflowCell{}}};
  net = mark_special_cells(net, kinds);
  const CellId up = *net.successors(junction)[0].target;

  NetState s = NetState::discrete(net);
  SimulationClock clock;
  Rng rng(424242);
  const std::int64_t wanted = 100000;
  std::int64_t traversals = 0, first = 0;
  while (traversals < wanted) {
    for (const auto& e : apply_discrete_step(net, s, clock, rng)) {
      if (e.kind == EventKind::kMoved && e.cell == junction) {
        ++traversals;
        first += *e.target == up;
      }
    }
  }
  const double freq = static_cast<double>(first) / static_cast<double>(traversals);
  const double bound = 4.0 * std::sqrt(0.7 * 0.3 / static_cast<double>(traversals));
  o.pass = std::abs(freq - 0.7) <= bound;
  o.detail = fmt("%lld traversals, freq %.5f, |err| %.5f <= %.5f", static_cast<long long>(traversals), freq,
                 std::abs(freq - 0.7), bound);
  return o;
}

Outcome synthesis_geometry() {
  Outcome o;
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> radius(0.4, 2.5);
  std::size_t pairs = 0;
  for (int i = 0; i < 100; ++i) {
    const BasicGraph g = testing::make_random_graph(rng, 12);
    const double r = radius(rng);
    const SynthesisResult a = synthesize(g, r);
    const SynthesisResult b = synthesize(g, r);
    if (!(a.net == b.net) || a.net.adjacency() != b.net.adjacency() || a.lanes != b.lanes) o.pass = false;
    for (const auto& lane : a.lanes) {
      for (std::size_t k = 0; k + 1 < lane.size(); ++k, ++pairs) {
        if (!neighbor_predicate(a.net.cell(lane[k]).position, a.net.cell(lane[k + 1]).position, r)) o.pass = false;
      }
    }
    if (!validate_static_structure(a.net).isolated.empty()) o.pass = false;
  }
  o.detail = fmt("100 graphs, %zu lane pairs within 2R, no isolated cells, deterministic", pairs);
  return o;
}

Outcome separator_integrity() {
  Outcome o;
  const Position a(0, 0, 0), b(60, 0, 0);
  // Cells carry lane-change directions; the separator alone must stop them.
  const RoadSection tempting = build_multiband(a, b, 1.0, 2, false, false, 0.5);
  const RoadSection fenced = build_multiband(a, b, 1.0, 2, true);
  std::vector<Cell> cells = tempting.cells;
  std::map<CellId, int> row_of;
  for (std::size_t r = 0; r < tempting.rows.size(); ++r) {
    const auto& row = tempting.rows[r].cells;
    for (CellId c : row) row_of[c] = static_cast<int>(r);
    cells[row.front()].kind = GeneratorSpec{ConstantRate{1.0}, {}};
    cells[row.back()].kind = OutflowCell{};
  }
  const NetTopology net(1.0, cells, fenced.separator_pairs);
  NetState s = NetState::discrete(net);
  SimulationClock clock;
  Rng rng(88);
  std::int64_t moves = 0, crossings = 0;
  for (int step = 0; step < 10000; ++step) {
    for (const auto& e : apply_discrete_step(net, s, clock, rng)) {
      if (e.kind != EventKind::kMoved) continue;
      ++moves;
      crossings += row_of[e.cell] != row_of[*e.target];
    }
  }
  o.pass = crossings == 0 && moves > 0;
  o.detail = fmt("%lld moves in 10^4 steps, %lld cross-lane", static_cast<long long>(moves), static_cast<long long>(crossings));
  return o;
}

Outcome quarry_bottleneck() {
  Outcome o;
  const QuarryConfig saturated = testing::square_loop(5);
  const QuarryMetrics m = compute_metrics(run_quarry(saturated, 10000, 1, 10000).trace, saturated);
  const QuarryConfig single = testing::square_loop(1);
  const QuarryMetrics one = compute_metrics(run_quarry(single, 10000, 1, 10000).trace, single);
  const double target = 1.0 / 5.0;
  const bool rate_ok = std::abs(m.loads_per_step - target) <= 0.05 * target;
  o.attainable_part_ok = one.mean_cycle_time == 25.0;
  o.pass = rate_ok && o.attainable_part_ok;
  o.detail = fmt("loads/step %.4f (target 0.2 +-5%%); single-tipper cycle %.3f (target 25)", m.loads_per_step,
                 one.mean_cycle_time);
  return o;
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "qcn_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto cells = testing::chain_cells(20);
  cells[0].kind = GeneratorSpec{PeriodicRate{3, 1.0}, {}};
  cells[10].kind = TurnstileSpec{4.0};
  cells[19].kind = OutflowCell{};
  cells[5].directions = {{Position(2, 0, 0), 0.6}, {Position(-2, 0, 0), 0.4}};
  write_file(dir / "net.json", serialize_net(NetTopology(1.0, cells)));
  write_file(dir / "closed.json", serialize_quarry_config(testing::square_loop(5)));
  write_file(dir / "open.json", serialize_quarry_config(testing::open_road()));
  const std::string net = (dir / "net.json").string();

  std::vector<std::vector<std::string>> invocations = {
      {"simulate", "--net", net, "--steps", "500", "--seed", "7", "--trace"},
      {"simulate", "--net", net, "--steps", "500", "--seed", "7", "--conflict", "random", "--stride", "9", "--trace"},
      {"simulate", "--net", net, "--steps", "300", "--mode", "continuous", "--delta", "0.3", "--trace"},
      {"quarry", "--config", (dir / "closed.json").string(), "--steps", "2000", "--seed", "5", "--metrics",
       (dir / "m.csv").string(), "--trace"},
      {"quarry", "--config", (dir / "open.json").string(), "--steps", "2000", "--seed", "5", "--metrics",
       (dir / "m.csv").string(), "--trace"},
  };
  int identical = 0;
  for (std::size_t i = 0; i < invocations.size(); ++i) {
    std::string outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
      auto args = invocations[i];
      const fs::path trace = dir / fmt("trace_%zu_%d.csv", i, rep);
      args.push_back(trace.string());
      args.insert(args.begin(), "qcn");
      std::vector<const char*> argv;
      for (const auto& s : args) argv.push_back(s.c_str());
      std::ostringstream out, err;
      if (cli_main(static_cast<int>(argv.size()), argv.data(), out, err) != 0) o.pass = false;
      outputs[rep] = read_file(trace);
    }
    if (outputs[0] == outputs[1] && !outputs[0].empty()) {
      ++identical;
    } else {
      o.pass = false;
    }
  }
  o.detail = fmt("%d/%zu invocation pairs byte-identical", identical, invocations.size());
  return o;
}

}  // namespace

int main() {
  report(1, "ring circulation", ring_circulation());
  report(2, "discrete conservation", discrete_conservation());
  report(3, "continuous conservation", continuous_conservation());
  report(4, "turnstile timing", turnstile_timing());
  report(5, "generator/outflow balance", generator_balance());
  report(6, "branch probability", branch_probability());
  report(7, "synthesis geometry", synthesis_geometry());
  report(8, "separator integrity", separator_integrity());
  report(9, "quarry bottleneck", quarry_bottleneck());
  report(10, "determinism", determinism());
  std::printf("%s\n", unexpected == 0 ? "acceptance: no unexpected failures" : "acceptance: UNEXPECTED FAILURES");
  return unexpected == 0 ? 0 : 1;
}
