#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "fixtures.hpp"
#include "qcn/error.hpp"
#include "qcn/synthesis.hpp"

using namespace qcn;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::kInvalidArgument;
}

BasicGraph y_junction() {
  BasicGraph g;
  g.vertices = {{0, Position(0, 0, 0)}, {1, Position(10, 0, 0)}, {2, Position(20, 6, 0)}, {3, Position(20, -6, 0)}};
  g.edges = {{0, 1}, {1, 2}, {1, 3}};
  return g;
}

}  // namespace

TEST_CASE("edge discretization") {
  const auto ten = discretize_edge(Position(0, 0, 0), Position(10, 0, 0), 1.0);
  REQUIRE(ten.size() == 6);
  for (std::size_t i = 0; i < ten.size(); ++i) {
    CHECK(ten[i].position == Position(2.0 * static_cast<double>(i), 0, 0));
    CHECK(ten[i].direction.delta == Position(2, 0, 0));
  }

  const auto nine = discretize_edge(Position(0, 0, 0), Position(9, 0, 0), 1.0);
  REQUIRE(nine.size() == 6);
  for (std::size_t i = 0; i + 1 < nine.size(); ++i) {
    CHECK((nine[i + 1].position - nine[i].position).norm() == doctest::Approx(1.8));
  }

  const auto one = discretize_edge(Position(0, 0, 0), Position(1, 0, 0), 1.0);
  REQUIRE(one.size() == 2);
  CHECK(one[1].position.x() == 1.0);

  CHECK(kind_of([] { discretize_edge(Position(1, 1, 0), Position(1, 1, 0), 1.0); }) == ErrorKind::kDegenerateEdge);
}

TEST_CASE("diagonal edges stay chained under rounding") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coord(-50.0, 50.0);
  std::uniform_real_distribution<double> radius(0.1, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const Position a(coord(rng), coord(rng), 0.0);
    const Position b(coord(rng), coord(rng), 0.0);
    const double r = radius(rng);
    const auto cells = discretize_edge(a, b, r);
    CHECK(cells.back().position == b);
    for (std::size_t k = 0; k + 1 < cells.size(); ++k) REQUIRE(neighbor_predicate(cells[k].position, cells[k + 1].position, r));
  }
}

TEST_CASE("multiband rows") {
  const Position a(0, 0, 0), b(10, 0, 0);
  const RoadSection open = build_multiband(a, b, 1.0, 2, false);
  REQUIRE(open.rows.size() == 2);
  CHECK(open.separator_pairs.empty());
  const auto& r0 = open.rows[0].cells;
  const auto& r1 = open.rows[1].cells;
  REQUIRE(r0.size() == r1.size());
  for (std::size_t i = 0; i < r0.size(); ++i) {
    CHECK(neighbor_predicate(open.cells[r0[i]].position, open.cells[r1[i]].position, 1.0));
    CHECK(open.cells[r1[i]].position.y() == -2.0);
  }

  const RoadSection sep = build_multiband(a, b, 1.0, 2, true);
  CHECK(sep.separator_pairs.size() == r0.size());
  for (std::size_t i = 0; i < r0.size(); ++i) {
    CHECK(sep.cells[r0[i]].position == open.cells[r0[i]].position);
    CHECK(sep.separator_pairs.count(make_pair_key(sep.rows[0].cells[i], sep.rows[1].cells[i])) == 1);
  }

  const RoadSection single = build_multiband(a, b, 1.0, 1, false);
  const auto lane = discretize_edge(a, b, 1.0);
  REQUIRE(single.cells.size() == lane.size());
  for (std::size_t i = 0; i < lane.size(); ++i) {
    CHECK(single.cells[i].position == lane[i].position);
    CHECK(single.cells[i].directions == std::vector<DirectionVector>{lane[i].direction});
  }
}

TEST_CASE("lane changes keep direction probabilities normalised") {
  const RoadSection s = build_multiband(Position(0, 0, 0), Position(30, 40, 0), 1.0, 3, false, true, 0.25);
  for (const Cell& c : s.cells) {
    if (c.directions.size() < 2) continue;
    double sum = 0.0;
    for (const auto& d : c.directions) sum += d.probability;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(build_multiband(Position(0, 0, 0), Position(5, 0, 0), 1.0, 2, false, false, 0.6), Error);
}

TEST_CASE("lateral rows are tangent on oblique roads") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> coord(-40.0, 40.0);
  for (int i = 0; i < 500; ++i) {
    const Position a(coord(rng), coord(rng), 0.0);
    const Position b(coord(rng), coord(rng), 0.0);
    if ((b - a).norm() < 1.0) continue;
    const RoadSection s = build_multiband(a, b, 1.0, 2, false, true);
    const auto& f0 = s.rows[0].cells;
    const auto& f1 = s.rows[1].cells;
    const auto& r0 = s.rows[2].cells;
    const std::size_t n = f0.size();
    for (std::size_t k = 0; k < n; ++k) {
      REQUIRE(neighbor_predicate(s.cells[f0[k]].position, s.cells[f1[k]].position, 1.0));
      REQUIRE(neighbor_predicate(s.cells[f0[k]].position, s.cells[r0[n - 1 - k]].position, 1.0));
    }
  }
}

TEST_CASE("single edge graph matches its discretization") {
  BasicGraph g;
  g.vertices = {{7, Position(0, 0, 0)}, {9, Position(10, 0, 0)}};
  g.edges = {{7, 9}};
  const NetTopology net = build_from_graph(g, 1.0);
  const auto lane = discretize_edge(Position(0, 0, 0), Position(10, 0, 0), 1.0);
  REQUIRE(net.size() == lane.size());
  // Vertex cells come first, then the interior of the edge in travel order.
  CHECK(net.cell(0).position == lane.front().position);
  CHECK(net.cell(1).position == lane.back().position);
  for (std::size_t i = 1; i + 1 < lane.size(); ++i) CHECK(net.cell(i + 1).position == lane[i].position);
  for (CellId id = 0; id < net.size(); ++id) {
    if (id == 1) {
      CHECK(net.cell(id).directions.empty());
    } else {
      REQUIRE(net.cell(id).directions.size() == 1);
      CHECK((net.cell(id).directions[0].delta - Position(2, 0, 0)).norm() < 1e-12);
    }
  }
}

TEST_CASE("branch rule sets junction probabilities") {
  const BasicGraph g = y_junction();
  const std::vector<BranchRule> rules{{1, {{1, 0.7}, {2, 0.3}}}};
  const NetTopology net = build_from_graph(g, 1.0, rules);
  const Cell& junction = net.cell(1);
  REQUIRE(junction.position == Position(10, 0, 0));
  REQUIRE(junction.directions.size() == 2);
  CHECK(junction.directions[0].probability == 0.7);
  CHECK(junction.directions[1].probability == 0.3);
  CHECK(junction.directions[0].delta.y() > 0.0);
  CHECK(junction.directions[1].delta.y() < 0.0);
  CHECK(validate_static_structure(net).valid());

  const NetTopology uniform = build_from_graph(g, 1.0);
  CHECK(uniform.cell(1).directions[0].probability == 0.5);

  const std::vector<BranchRule> wrong_edge{{1, {{0, 1.0}}}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0, wrong_edge); }) == ErrorKind::kUnreachableBranch);
  const std::vector<BranchRule> nowhere{{42, {{1, 1.0}}}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0, nowhere); }) == ErrorKind::kUnreachableBranch);
}

TEST_CASE("edges sharing a vertex share one cell") {
  BasicGraph g;
  g.vertices = {{0, Position(0, 0, 0)}, {1, Position(8, 0, 0)}, {2, Position(8, 8, 0)}};
  g.edges = {{0, 1}, {1, 2}};
  const NetTopology net = build_from_graph(g, 1.0);
  std::size_t at_vertex = 0;
  for (const Cell& c : net.cells()) at_vertex += (c.position - Position(8, 0, 0)).norm() < 1e-9;
  CHECK(at_vertex == 1);
  CHECK(validate_static_structure(net).duplicate_positions.empty());
}

TEST_CASE("graph validation") {
  BasicGraph g;
  g.vertices = {{0, Position(0, 0, 0)}, {1, Position(0, 0, 0)}, {2, Position(5, 0, 0)}};
  g.edges = {{0, 1}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0); }) == ErrorKind::kDegenerateEdge);
  g.edges = {{0, 0}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0); }) == ErrorKind::kDegenerateEdge);
  g.edges = {{0, 9}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0); }) == ErrorKind::kInvalidGraph);
  g.edges = {{0, 2}, {2, 0}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0); }) == ErrorKind::kInvalidGraph);
  g.edges = {{0, 2, 0}};
  CHECK(kind_of([&] { build_from_graph(g, 1.0); }) == ErrorKind::kInvalidGraph);
}

TEST_CASE("special cells") {
  BasicGraph g;
  g.vertices = {{0, Position(0, 0, 0)}, {1, Position(20, 0, 0)}};
  g.edges = {{0, 1}};
  const NetTopology net = build_from_graph(g, 1.0);
  const std::vector<std::pair<CellId, CellKind>> ends{{1, OutflowCell{}}, {5, TurnstileSpec{5.0}}};
  const NetTopology marked = mark_special_cells(net, ends);
  CHECK(std::holds_alternative<OutflowCell>(marked.cell(1).kind));
  CHECK(std::holds_alternative<TurnstileSpec>(marked.cell(5).kind));

  // The turnstile adds its five steps of hold to an end-to-end run.
  auto travel = [](const NetTopology& n) {
    NetState s = NetState::discrete(n);
    s.set_cell_state(0, Transitable{});
    SimulationClock clock;
    Rng rng(0);
    std::int64_t absorbed_at = -1;
    while (absorbed_at < 0 && clock.step < 100) {
      const auto step = clock.step;
      for (const auto& e : apply_discrete_step(n, s, clock, rng)) {
        if (e.kind == EventKind::kAbsorbed) absorbed_at = step;
      }
    }
    return absorbed_at;
  };
  const std::vector<std::pair<CellId, CellKind>> only_outflow{{1, OutflowCell{}}};
  CHECK(travel(marked) == travel(mark_special_cells(net, only_outflow)) + 5);

  const std::vector<std::pair<CellId, CellKind>> twice{{3, OutflowCell{}}, {3, TurnstileSpec{1.0}}};
  CHECK(kind_of([&] { mark_special_cells(net, twice); }) == ErrorKind::kDuplicateAssignment);
  const std::vector<std::pair<CellId, CellKind>> again{{1, TurnstileSpec{1.0}}};
  CHECK(kind_of([&] { mark_special_cells(marked, again); }) == ErrorKind::kDuplicateAssignment);
  const std::vector<std::pair<CellId, CellKind>> missing{{999, OutflowCell{}}};
  CHECK(kind_of([&] { mark_special_cells(net, missing); }) == ErrorKind::kUnknownCell);
}

TEST_CASE("synthesized nets over random graphs") {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> radius(0.5, 2.0);
  for (int trial = 0; trial < 120; ++trial) {
    const BasicGraph g = testing::make_random_graph(rng, 9);
    const double r = radius(rng);
    CAPTURE(trial);
    const SynthesisResult first = synthesize(g, r);
    const SynthesisResult second = synthesize(g, r);
    REQUIRE(first.net == second.net);
    REQUIRE(first.net.adjacency() == second.net.adjacency());
    REQUIRE(first.lanes == second.lanes);

    for (const auto& lane : first.lanes) {
      for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
        REQUIRE(neighbor_predicate(first.net.cell(lane[i]).position, first.net.cell(lane[i + 1]).position, r));
      }
    }
    const ValidationReport report = validate_static_structure(first.net);
    REQUIRE(report.valid());
    REQUIRE(report.isolated.empty());
    REQUIRE(report.duplicate_positions.empty());
    REQUIRE(report.dangling.empty());
    for (const Cell& c : first.net.cells()) {
      if (c.directions.size() < 2) continue;
      double sum = 0.0;
      for (const auto& d : c.directions) sum += d.probability;
      REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}
