#include "qcn/synthesis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include "qcn/error.hpp"

namespace qcn {

void validate_graph(const BasicGraph& graph) {
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < graph.vertices.size(); ++i) {
    const auto& v = graph.vertices[i];
    if (!v.position.allFinite()) {
      throw Error(ErrorKind::kInvalidGraph, "vertex " + std::to_string(v.id) + " has a non-finite position");
    }
    if (!index.emplace(v.id, i).second) {
      throw Error(ErrorKind::kInvalidGraph, "duplicate vertex id " + std::to_string(v.id));
    }
  }
  std::set<std::pair<std::int64_t, std::int64_t>> links;
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const Edge& e = graph.edges[i];
    const std::string name = "edge " + std::to_string(i);
    if (!index.count(e.from) || !index.count(e.to)) {
      throw Error(ErrorKind::kInvalidGraph, name + " references a missing vertex");
    }
    if (e.from == e.to) throw Error(ErrorKind::kDegenerateEdge, name + " starts and ends at one vertex");
    const auto& a = graph.vertices[index[e.from]].position;
    const auto& b = graph.vertices[index[e.to]].position;
    if ((b - a).norm() == 0.0) throw Error(ErrorKind::kDegenerateEdge, name + " has zero length");
    if (e.lanes < 1) throw Error(ErrorKind::kInvalidGraph, name + " needs at least one lane");
    if (!(e.lane_change_probability >= 0.0 && e.lane_change_probability <= 0.5)) {
      throw Error(ErrorKind::kInvalidGraph, name + " lane change probability must lie in [0, 0.5]");
    }
    if (!links.insert(std::minmax(e.from, e.to)).second) {
      throw Error(ErrorKind::kInvalidGraph,
                  name + " duplicates another edge between the same vertices; use lanes or bidirectional");
    }
  }
}

namespace {

std::vector<LaneCell> discretize_with(const Position& a, const Position& b, std::int64_t n) {
  const Eigen::Vector3d span = b - a;
  const Eigen::Vector3d step = span / static_cast<double>(n);
  std::vector<LaneCell> cells;
  cells.reserve(static_cast<std::size_t>(n) + 1);
  for (std::int64_t i = 0; i <= n; ++i) {
    const Position p = i == n ? b : Position(a + span * static_cast<double>(i) / static_cast<double>(n));
    cells.push_back({p, {step, 1.0}});
  }
  return cells;
}

bool chained(const std::vector<LaneCell>& cells, double radius) {
  return std::adjacent_find(cells.begin(), cells.end(), [&](const LaneCell& x, const LaneCell& y) {
           return !neighbor_predicate(x.position, y.position, radius);
         }) == cells.end();
}

std::int64_t minimal_intervals(double length, double radius) {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(length / (2.0 * radius))));
}

}  // namespace

std::vector<LaneCell> discretize_edge(const Position& a, const Position& b, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "radius must be positive");
  const double length = (b - a).norm();
  if (length == 0.0) throw Error(ErrorKind::kDegenerateEdge, "edge endpoints coincide");

  // Rounding can push a tangent spacing just past 2R; one more interval fixes it.
  for (auto n = minimal_intervals(length, radius);; ++n) {
    auto cells = discretize_with(a, b, n);
    if (chained(cells, radius)) return cells;
  }
}

namespace {

Eigen::Vector3d left_normal(const Eigen::Vector3d& direction) {
  Eigen::Vector3d n(-direction.y(), direction.x(), 0.0);
  if (n.norm() == 0.0) return Eigen::Vector3d::UnitX();
  return n.normalized();
}

}  // namespace

namespace {

// `extra_intervals` and `narrowing` let synthesis retry a section whose tangencies do not
// survive merging with cells of earlier edges.
RoadSection build_section(const Position& a, const Position& b, double radius, int lanes, bool separator,
                          bool bidirectional, double lane_change_probability, std::int64_t extra_intervals,
                          int narrowing) {
  if (lanes < 1) throw Error(ErrorKind::kInvalidArgument, "lanes must be >= 1");
  if (!(lane_change_probability >= 0.0 && lane_change_probability <= 0.5)) {
    throw Error(ErrorKind::kInvalidArgument, "lane change probability must lie in [0, 0.5]");
  }
  if ((b - a).norm() == 0.0) throw Error(ErrorKind::kDegenerateEdge, "edge endpoints coincide");

  const Eigen::Vector3d normal = left_normal(b - a);
  const int rows_total = bidirectional ? 2 * lanes : lanes;

  // Row k of the forward carriageway sits 2Rk to the right of a->b; reverse row k sits
  // 2R(k+1) to the left and runs b->a.
  auto row_ends = [&](int r, double gap) -> std::pair<Position, Position> {
    if (r < lanes) {
      const Eigen::Vector3d offset = -gap * r * normal;
      return {a + offset, b + offset};
    }
    const Eigen::Vector3d offset = gap * (r - lanes + 1) * normal;
    return {b + offset, a + offset};
  };

  // Every row uses the same interval count so lateral neighbours share an index.
  double gap = 2.0 * radius;
  for (int i = 0; i < narrowing; ++i) gap *= 1.0 - 0x1.0p-50;
  std::vector<std::vector<LaneCell>> rows(static_cast<std::size_t>(rows_total));
  for (auto n = minimal_intervals((b - a).norm(), radius) + extra_intervals;; ++n) {
    bool ok = true;
    for (int r = 0; r < rows_total && ok; ++r) {
      const auto [from, to] = row_ends(r, gap);
      rows[static_cast<std::size_t>(r)] = discretize_with(from, to, n);
      ok = chained(rows[static_cast<std::size_t>(r)], radius);
    }
    if (ok) break;
  }
  const std::size_t n = rows.front().size();

  std::vector<std::pair<int, int>> lateral_rows;  // pairs of adjacent rows, second index reversed if flagged
  for (int k = 0; k + 1 < lanes; ++k) lateral_rows.emplace_back(k, k + 1);
  if (bidirectional) {
    lateral_rows.emplace_back(0, lanes);
    for (int k = 0; k + 1 < lanes; ++k) lateral_rows.emplace_back(lanes + k, lanes + k + 1);
  }
  auto lateral_index = [&](int r0, int r1, std::size_t i) {
    const bool opposite = (r0 < lanes) != (r1 < lanes);
    return opposite ? n - 1 - i : i;
  };

  // Rows 2R apart are tangent; when rounding leaves a pair a few ulps apart, pull the
  // rows in until every lateral pair satisfies the predicate.
  for (int attempt = 0; attempt < 64; ++attempt) {
    bool tangent = true;
    for (const auto& [r0, r1] : lateral_rows) {
      for (std::size_t i = 0; i < n && tangent; ++i) {
        tangent = neighbor_predicate(rows[static_cast<std::size_t>(r0)][i].position,
                                     rows[static_cast<std::size_t>(r1)][lateral_index(r0, r1, i)].position, radius);
      }
    }
    if (tangent) break;
    gap *= 1.0 - 0x1.0p-50;
    for (int r = 0; r < rows_total; ++r) {
      const auto [from, to] = row_ends(r, gap);
      rows[static_cast<std::size_t>(r)] = discretize_with(from, to, static_cast<std::int64_t>(n) - 1);
    }
  }

  RoadSection section;
  for (int r = 0; r < rows_total; ++r) {
    LaneRow row{{}, r < lanes ? r : r - lanes, r >= lanes};
    for (const LaneCell& lc : rows[static_cast<std::size_t>(r)]) {
      Cell c;
      c.id = section.cells.size();
      c.position = lc.position;
      c.directions = {lc.direction};
      row.cells.push_back(c.id);
      section.cells.push_back(std::move(c));
    }
    section.rows.push_back(std::move(row));
  }

  const auto forward_row = [&](int k) -> const LaneRow& { return section.rows[static_cast<std::size_t>(k)]; };
  const auto reverse_row = [&](int k) -> const LaneRow& {
    return section.rows[static_cast<std::size_t>(lanes + k)];
  };

  std::vector<CellPair> lateral;
  for (const auto& [r0, r1] : lateral_rows) {
    for (std::size_t i = 0; i < n; ++i) {
      lateral.emplace_back(section.rows[static_cast<std::size_t>(r0)].cells[i],
                           section.rows[static_cast<std::size_t>(r1)].cells[lateral_index(r0, r1, i)]);
    }
  }

  section.lateral_pairs = lateral;
  if (separator) {
    for (const auto& [u, v] : lateral) section.separator_pairs.insert(make_pair_key(u, v));
    return section;
  }

  if (lane_change_probability > 0.0 && lanes >= 2) {
    auto add_lane_changes = [&](const auto& row_of) {
      for (int k = 0; k < lanes; ++k) {
        for (std::size_t i = 1; i + 1 < n; ++i) {
          Cell& c = section.cells[row_of(k).cells[i]];
          std::vector<DirectionVector> lateral_moves;
          for (int other : {k - 1, k + 1}) {
            if (other < 0 || other >= lanes) continue;
            const Cell& target = section.cells[row_of(other).cells[i]];
            lateral_moves.push_back({target.position - c.position, lane_change_probability});
          }
          c.directions.front().probability = 1.0 - lane_change_probability * static_cast<double>(lateral_moves.size());
          c.directions.insert(c.directions.end(), lateral_moves.begin(), lateral_moves.end());
        }
      }
    };
    add_lane_changes(forward_row);
    if (bidirectional) add_lane_changes(reverse_row);
  }
  return section;
}

}  // namespace

RoadSection build_multiband(const Position& a, const Position& b, double radius, int lanes, bool separator,
                            bool bidirectional, double lane_change_probability) {
  return build_section(a, b, radius, lanes, separator, bidirectional, lane_change_probability, 0, 0);
}

namespace {

// One outgoing distribution contributed to a cell by a lane row passing through it.
using Flow = std::vector<std::pair<CellId, double>>;

struct CellRole {
  std::optional<std::int64_t> vertex;
  std::vector<Flow> flows;
  std::optional<CellId> funnel;
};

struct VertexOption {
  std::size_t edge = 0;
  CellId target = 0;
};

// Cells within the tolerance of an existing cell reuse it. Buckets are one tolerance wide,
// so a lookup inspects the 27 surrounding buckets.
class MergeIndex {
 public:
  explicit MergeIndex(double tolerance) : tolerance_(tolerance) {}

  std::optional<CellId> find(const std::vector<Cell>& cells, const Position& p) const {
    const Key k = key(p);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = buckets_.find({k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == buckets_.end()) continue;
          for (CellId id : it->second) {
            if ((cells[id].position - p).norm() <= tolerance_) return id;
          }
        }
      }
    }
    return std::nullopt;
  }

  void insert(CellId id, const Position& p) { buckets_[key(p)].push_back(id); }

 private:
  using Key = std::array<std::int64_t, 3>;
  Key key(const Position& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / tolerance_)),
            static_cast<std::int64_t>(std::floor(p.y() / tolerance_)),
            static_cast<std::int64_t>(std::floor(p.z() / tolerance_))};
  }

  double tolerance_;
  std::map<Key, std::vector<CellId>> buckets_;
};

}  // namespace

SynthesisResult synthesize(const BasicGraph& graph, double radius, std::span<const BranchRule> rules) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "radius must be positive");
  validate_graph(graph);
  // Synthesized positions are exact up to rounding, so coincidence is tested far more
  // tightly than the R/100 default meant for hand-authored nets.
  const double tolerance = radius * 1e-9;

  std::map<std::int64_t, const GraphVertex*> vertex_by_id;
  for (const auto& v : graph.vertices) vertex_by_id[v.id] = &v;
  std::set<std::int64_t> incident;
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const Edge& e = graph.edges[i];
    if ((vertex_by_id[e.to]->position - vertex_by_id[e.from]->position).norm() <= tolerance) {
      throw Error(ErrorKind::kDegenerateEdge, "edge " + std::to_string(i) + " is shorter than the merge tolerance");
    }
    incident.insert(e.from);
    incident.insert(e.to);
  }

  std::vector<Cell> cells;
  std::vector<CellRole> roles;
  MergeIndex index(tolerance);
  std::map<std::int64_t, CellId> vertex_cell;
  std::map<CellId, std::vector<VertexOption>> options;
  SeparatorSet separators;
  SynthesisResult result;

  auto cell_at = [&](const Position& p) {
    if (auto existing = index.find(cells, p)) return *existing;
    Cell c;
    c.id = cells.size();
    c.position = p;
    index.insert(c.id, p);
    cells.push_back(std::move(c));
    roles.emplace_back();
    return cells.back().id;
  };

  for (const auto& v : graph.vertices) {
    if (!incident.count(v.id)) continue;
    const CellId id = cell_at(v.position);
    roles[id].vertex = v.id;
    vertex_cell[v.id] = id;
  }

  for (std::size_t ei = 0; ei < graph.edges.size(); ++ei) {
    const Edge& e = graph.edges[ei];
    const Position& a = vertex_by_id[e.from]->position;
    const Position& b = vertex_by_id[e.to]->position;
    // Cells that merge into earlier edges take the earlier position, which may sit an ulp
    // off this section's tangencies. Check on the merged positions and retry if needed.
    RoadSection section;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 128) throw Error(ErrorKind::kInvalidGraph, "edge " + std::to_string(ei) + " cannot be laid out");
      section = build_section(a, b, radius, e.lanes, e.separator, e.bidirectional, e.lane_change_probability,
                              attempt / 2, (attempt + 1) / 2);
      std::vector<Position> merged(section.cells.size());
      for (CellId l = 0; l < section.cells.size(); ++l) {
        const auto existing = index.find(cells, section.cells[l].position);
        merged[l] = existing ? cells[*existing].position : section.cells[l].position;
      }
      bool ok = true;
      for (const auto& row : section.rows) {
        for (std::size_t i = 0; ok && i + 1 < row.cells.size(); ++i) {
          ok = neighbor_predicate(merged[row.cells[i]], merged[row.cells[i + 1]], radius);
        }
      }
      for (std::size_t i = 0; ok && i < section.lateral_pairs.size(); ++i) {
        ok = neighbor_predicate(merged[section.lateral_pairs[i].first], merged[section.lateral_pairs[i].second], radius);
      }
      if (ok) break;
    }

    std::vector<CellId> global(section.cells.size());
    for (CellId l = 0; l < section.cells.size(); ++l) global[l] = cell_at(section.cells[l].position);

    // Lane-change directions point at another row of the section; find which.
    auto local_target = [&](CellId l, const DirectionVector& d) -> std::optional<CellId> {
      const Position want = section.cells[l].position + d.delta;
      for (CellId m = 0; m < section.cells.size(); ++m) {
        if ((section.cells[m].position - want).norm() <= tolerance) return m;
      }
      return std::nullopt;
    };

    const int lanes = e.lanes;
    auto row_of = [&](int k, bool reverse) -> const LaneRow& {
      return section.rows[static_cast<std::size_t>(reverse ? lanes + k : k)];
    };

    for (const auto& row : section.rows) {
      for (std::size_t i = 0; i + 1 < row.cells.size(); ++i) {
        const CellId l = row.cells[i];
        Flow flow{{global[row.cells[i + 1]], section.cells[l].directions.front().probability}};
        for (std::size_t d = 1; d < section.cells[l].directions.size(); ++d) {
          const auto& dir = section.cells[l].directions[d];
          if (auto m = local_target(l, dir)) flow.emplace_back(global[*m], dir.probability);
        }
        roles[global[l]].flows.push_back(std::move(flow));
      }

      const CellId end = global[row.cells.back()];
      if (roles[end].vertex) continue;
      // Row ends merge sideways toward the lane that reaches the vertex.
      CellId target_local;
      if (!row.reverse) {
        target_local = row_of(row.lane - 1, false).cells.back();
      } else if (row.lane == 0) {
        target_local = row_of(0, false).cells.front();
      } else {
        target_local = row_of(row.lane - 1, true).cells.back();
      }
      roles[end].funnel = global[target_local];
    }

    options[vertex_cell[e.from]].push_back({ei, global[row_of(0, false).cells[1]]});
    if (e.bidirectional) {
      const CellId to_cell = vertex_cell[e.to];
      const CellId entry = global[row_of(0, true).cells.front()];
      options[to_cell].push_back({ei, entry});
    }

    for (const auto& [u, v] : section.separator_pairs) {
      if (global[u] != global[v]) separators.insert(make_pair_key(global[u], global[v]));
    }
    for (const auto& row : section.rows) {
      std::vector<CellId> lane;
      for (CellId l : row.cells) lane.push_back(global[l]);
      result.lanes.push_back(std::move(lane));
    }
  }

  std::map<std::int64_t, const BranchRule*> rule_by_vertex;
  for (const auto& rule : rules) {
    if (!vertex_cell.count(rule.vertex)) {
      throw Error(ErrorKind::kUnreachableBranch, "rule for vertex " + std::to_string(rule.vertex) +
                                                     " which has no incident edges");
    }
    if (!rule_by_vertex.emplace(rule.vertex, &rule).second) {
      throw Error(ErrorKind::kInvalidGraph, "two branch rules for vertex " + std::to_string(rule.vertex));
    }
  }

  for (CellId id = 0; id < cells.size(); ++id) {
    const CellRole& role = roles[id];
    std::vector<std::pair<CellId, double>> out;
    auto add = [&](CellId target, double p) {
      auto it = std::find_if(out.begin(), out.end(), [&](const auto& o) { return o.first == target; });
      if (it == out.end()) {
        out.emplace_back(target, p);
      } else {
        it->second += p;
      }
    };

    if (role.vertex) {
      const auto& opts = options[id];
      if (auto it = rule_by_vertex.find(*role.vertex); it != rule_by_vertex.end()) {
        for (const Branch& br : it->second->branches) {
          auto opt = std::find_if(opts.begin(), opts.end(), [&](const VertexOption& o) { return o.edge == br.edge; });
          if (opt == opts.end()) {
            throw Error(ErrorKind::kUnreachableBranch, "edge " + std::to_string(br.edge) + " does not leave vertex " +
                                                           std::to_string(*role.vertex));
          }
          add(opt->target, br.probability);
        }
      } else {
        for (const auto& o : opts) add(o.target, 1.0 / static_cast<double>(opts.size()));
      }
    } else if (!role.flows.empty()) {
      // Rows sharing a cell split its outflow evenly.
      const double share = 1.0 / static_cast<double>(role.flows.size());
      for (const Flow& flow : role.flows) {
        for (const auto& [target, p] : flow) add(target, share * p);
      }
    } else if (role.funnel) {
      add(*role.funnel, 1.0);
    }

    for (const auto& [target, p] : out) {
      if (target == id) continue;
      cells[id].directions.push_back({cells[target].position - cells[id].position, p});
    }
  }

  // A separator only suppresses sideways contact. Where a synthesized direction runs
  // across a separated pair (junction wiring, or another road's lane through a merged
  // cell) the pair stays connected.
  for (const Cell& c : cells) {
    for (const auto& d : c.directions) {
      const Position want = c.position + d.delta;
      if (auto target = index.find(cells, want)) separators.erase(make_pair_key(c.id, *target));
    }
  }

  result.net = NetTopology(radius, std::move(cells), std::move(separators), tolerance);
  const ValidationReport report = validate_static_structure(result.net);
  if (!report.valid()) throw Error(ErrorKind::kValidationFailed, format_report(report));
  return result;
}

NetTopology build_from_graph(const BasicGraph& graph, double radius, std::span<const BranchRule> rules) {
  return synthesize(graph, radius, rules).net;
}

NetTopology mark_special_cells(const NetTopology& net, std::span<const std::pair<CellId, CellKind>> assignments) {
  std::vector<Cell> cells = net.cells();
  std::set<CellId> seen;
  for (const auto& [id, kind] : assignments) {
    if (id >= cells.size()) throw Error(ErrorKind::kUnknownCell, "cell " + std::to_string(id));
    if (!seen.insert(id).second || !std::holds_alternative<RegularCell>(cells[id].kind)) {
      throw Error(ErrorKind::kDuplicateAssignment, "cell " + std::to_string(id) + " already has a special kind");
    }
    cells[id].kind = kind;
  }
  return NetTopology(net.radius(), std::move(cells), net.separators(), net.position_tolerance());
}

}  // namespace qcn
