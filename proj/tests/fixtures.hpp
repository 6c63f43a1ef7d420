#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "qcn/circulation.hpp"
#include "qcn/net_core.hpp"
#include "qcn/synthesis.hpp"

namespace qcn::testing {

// n cells on a circle whose chord is 2R, each pointing at the next. The circle is pulled
// in by a relative 1e-12 so rounding never leaves a chord a few ulps beyond 2R.
inline NetTopology make_ring(std::size_t n, double radius = 1.0) {
  const double circumradius = (1.0 - 1e-12) * radius / std::sin(std::numbers::pi / static_cast<double>(n));
  std::vector<Position> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    pos[i] = Position(circumradius * std::cos(a), circumradius * std::sin(a), 0.0);
  }
  std::vector<Cell> cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    cells[i].id = i;
    cells[i].position = pos[i];
    cells[i].directions = {{pos[(i + 1) % n] - pos[i], 1.0}};
  }
  return NetTopology(radius, std::move(cells));
}

// Straight chain along x at spacing 2R. Every cell but the last points forward.
inline std::vector<Cell> chain_cells(std::size_t n, double radius = 1.0) {
  std::vector<Cell> cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    cells[i].id = i;
    cells[i].position = Position(2.0 * radius * static_cast<double>(i), 0.0, 0.0);
    if (i + 1 < n) cells[i].directions = {{Position(2.0 * radius, 0.0, 0.0), 1.0}};
  }
  return cells;
}

// Generator at 0, outflow at the end.
inline NetTopology make_open_chain(std::size_t n, GenerationFunction f = ConstantRate{1.0}, double radius = 1.0) {
  auto cells = chain_cells(n, radius);
  cells.front().kind = GeneratorSpec{f, {}};
  cells.back().kind = OutflowCell{};
  return NetTopology(radius, std::move(cells));
}

// Random closed net: cells jittered on a grid at spacing 2R, each pointing to a random
// subset of its grid neighbours. No generators or outflows.
inline NetTopology make_random_closed_net(std::mt19937_64& rng, std::size_t max_cells, double radius = 1.0) {
  std::uniform_int_distribution<int> side_dist(2, static_cast<int>(std::sqrt(static_cast<double>(max_cells))));
  const int w = side_dist(rng);
  const int h = side_dist(rng);
  std::vector<Cell> cells(static_cast<std::size_t>(w * h));
  auto id_of = [&](int x, int y) { return static_cast<CellId>(y * w + x); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      cells[id_of(x, y)].id = id_of(x, y);
      cells[id_of(x, y)].position = Position(2.0 * radius * x, 2.0 * radius * y, 0.0);
    }
  }
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  const int dx[] = {1, -1, 0, 0};
  const int dy[] = {0, 0, 1, -1};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::vector<std::pair<Position, double>> dirs;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k];
        const int ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        if (!dirs.empty() && (rng() & 1u)) continue;
        dirs.emplace_back(Position(2.0 * radius * dx[k], 2.0 * radius * dy[k], 0.0), weight(rng));
      }
      double total = 0.0;
      for (const auto& d : dirs) total += d.second;
      auto& c = cells[id_of(x, y)];
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        c.directions.push_back({dirs[k].first, dirs[k].second / total});
      }
      double sum = 0.0;
      for (std::size_t k = 0; k + 1 < c.directions.size(); ++k) sum += c.directions[k].probability;
      c.directions.back().probability = 1.0 - sum;
    }
  }
  return NetTopology(radius, std::move(cells));
}

// Random connected planar graph: grown on a lattice by attaching new vertices to free
// lattice neighbours, plus a few extra lattice edges. Edges never cross.
inline BasicGraph make_random_graph(std::mt19937_64& rng, int max_vertices = 8) {
  std::uniform_int_distribution<int> count_dist(2, max_vertices);
  std::uniform_real_distribution<double> spacing(12.0, 30.0);
  const int n = count_dist(rng);
  const double sx = spacing(rng);
  const double sy = spacing(rng);
  const int dx[] = {1, -1, 0, 0};
  const int dy[] = {0, 0, 1, -1};

  std::vector<std::pair<int, int>> lattice{{0, 0}};
  BasicGraph g;
  g.vertices.push_back({0, Position::Zero()});
  auto index_of = [&](std::pair<int, int> p) -> int {
    const auto it = std::find(lattice.begin(), lattice.end(), p);
    return it == lattice.end() ? -1 : static_cast<int>(it - lattice.begin());
  };
  auto connected = [&](int a, int b) {
    for (const auto& e : g.edges) {
      if ((e.from == a && e.to == b) || (e.from == b && e.to == a)) return true;
    }
    return false;
  };
  std::bernoulli_distribution bidirectional(0.6);
  std::uniform_int_distribution<int> lanes(1, 2);
  std::bernoulli_distribution separator(0.3);
  auto add_edge = [&](int a, int b) {
    Edge e;
    e.from = a;
    e.to = b;
    e.bidirectional = bidirectional(rng);
    e.lanes = lanes(rng);
    e.separator = separator(rng);
    g.edges.push_back(e);
  };

  while (static_cast<int>(lattice.size()) < n) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(lattice.size()) - 1);
    const int from = pick(rng);
    const int k = static_cast<int>(rng() % 4);
    const std::pair<int, int> p{lattice[from].first + dx[k], lattice[from].second + dy[k]};
    if (index_of(p) >= 0) continue;
    lattice.push_back(p);
    const int id = static_cast<int>(g.vertices.size());
    g.vertices.push_back({id, Position(sx * p.first, sy * p.second, 0.0)});
    add_edge(from, id);
  }
  for (int a = 0; a < n; ++a) {
    for (int k = 0; k < 4; k += 2) {
      const int b = index_of({lattice[a].first + dx[k], lattice[a].second + dy[k]});
      if (b >= 0 && !connected(a, b) && rng() % 3 == 0) add_edge(a, b);
    }
  }
  return g;
}

}  // namespace qcn::testing
