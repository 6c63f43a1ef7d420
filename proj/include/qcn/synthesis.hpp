#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qcn/net_core.hpp"

namespace qcn {

struct GraphVertex {
  std::int64_t id = 0;
  Position position = Position::Zero();

  bool operator==(const GraphVertex& other) const { return id == other.id && position == other.position; }
};

// A straight road segment. `lanes` counts lanes per travel direction; a
// bidirectional edge gets a second carriageway on the left of from->to.
struct Edge {
  std::int64_t from = 0;
  std::int64_t to = 0;
  int lanes = 1;
  bool separator = false;
  bool bidirectional = false;
  double lane_change_probability = 0.0;

  bool operator==(const Edge&) const = default;
};

// Edges are identified by their index in `edges`.
struct BasicGraph {
  std::vector<GraphVertex> vertices;
  std::vector<Edge> edges;

  bool operator==(const BasicGraph&) const = default;
};

struct Branch {
  std::size_t edge = 0;
  double probability = 0.0;

  bool operator==(const Branch&) const = default;
};

struct BranchRule {
  std::int64_t vertex = 0;
  std::vector<Branch> branches;

  bool operator==(const BranchRule&) const = default;
};

// Throws Error(kInvalidGraph) or Error(kDegenerateEdge).
void validate_graph(const BasicGraph& graph);

struct LaneCell {
  Position position = Position::Zero();
  DirectionVector direction;
};

// n = max(1, ceil(L / 2R)) intervals, n + 1 cells at spacing L/n <= 2R, all
// pointing toward b with a translation of one spacing.
std::vector<LaneCell> discretize_edge(const Position& a, const Position& b, double radius);

struct LaneRow {
  std::vector<CellId> cells;  // in travel order
  int lane = 0;               // 0 is the kerb-side lane of its carriageway
  bool reverse = false;       // travels b -> a
};

// Standalone road section with local cell ids.
struct RoadSection {
  std::vector<Cell> cells;
  std::vector<LaneRow> rows;
  std::vector<CellPair> lateral_pairs;  // side-by-side cells of adjacent rows
  SeparatorSet separator_pairs;
};

// Rows are offset by exactly 2R perpendicular to (b - a) in the xy plane. Without a
// separator, interior cells of adjacent same-direction rows get lateral lane-change
// directions weighted by `lane_change_probability`; with one, every lateral pair
// between adjacent rows is recorded as a separator pair.
RoadSection build_multiband(const Position& a, const Position& b, double radius, int lanes, bool separator,
                            bool bidirectional = false, double lane_change_probability = 0.0);

struct SynthesisResult {
  NetTopology net;
  std::vector<std::vector<CellId>> lanes;  // every lane row, in global ids
};

// Cell numbering: one cell per vertex with incident edges (vertex order), then
// edge cells in edge order. Row endpoints within the position tolerance are
// merged; vertex cells carry one direction per outgoing traversal.
SynthesisResult synthesize(const BasicGraph& graph, double radius, std::span<const BranchRule> rules = {});

NetTopology build_from_graph(const BasicGraph& graph, double radius, std::span<const BranchRule> rules = {});

NetTopology mark_special_cells(const NetTopology& net, std::span<const std::pair<CellId, CellKind>> assignments);

}  // namespace qcn
