#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace qcn {

using CellId = std::size_t;

// 2D nets use z = 0; the same predicate serves both.
using Position = Eigen::Vector3d;

inline constexpr double kProbabilityTolerance = 1e-9;

// Translation to a neighbor cell with the probability of taking it.
struct DirectionVector {
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();
  double probability = 1.0;

  bool operator==(const DirectionVector& other) const {
    return delta == other.delta && probability == other.probability;
  }
};

// Attributes of the micro-object occupying a cell. Keys prefixed with
// kCompositionPrefix are fractions of a polysort flow.
struct Payload {
  std::map<std::string, double> values;

  static constexpr std::string_view kCompositionPrefix = "composition.";

  double get(const std::string& key, double fallback = 0.0) const;
  void set(const std::string& key, double value) { values[key] = value; }
  bool has(const std::string& key) const { return values.count(key) != 0; }

  bool operator==(const Payload&) const = default;
};

// Empty string when valid, otherwise a description of the first violation.
std::string check_payload(const Payload& payload);

struct ConstantRate {
  double rate = 0.0;
  bool operator==(const ConstantRate&) const = default;
};

// `amount` arrives at every step index divisible by `period`.
struct PeriodicRate {
  std::int64_t period = 1;
  double amount = 0.0;
  bool operator==(const PeriodicRate&) const = default;
};

struct TableRate {
  std::map<std::int64_t, double> amounts;
  bool operator==(const TableRate&) const = default;
};

using GenerationFunction = std::variant<ConstantRate, PeriodicRate, TableRate>;

double generation_amount(const GenerationFunction& function, std::int64_t step);

struct RegularCell {
  bool operator==(const RegularCell&) const = default;
};

struct GeneratorSpec {
  GenerationFunction function = ConstantRate{};
  Payload payload_template;
  bool operator==(const GeneratorSpec&) const = default;
};

struct OutflowCell {
  bool operator==(const OutflowCell&) const = default;
};

// Holding time in simulation time units; rounded up to whole steps when a run starts.
struct TurnstileSpec {
  double tau = 1.0;
  bool operator==(const TurnstileSpec&) const = default;
};

using CellKind = std::variant<RegularCell, GeneratorSpec, OutflowCell, TurnstileSpec>;

std::string_view kind_name(const CellKind& kind);

struct Cell {
  CellId id = 0;
  Position position = Position::Zero();
  CellKind kind = RegularCell{};
  std::vector<DirectionVector> directions;
  std::vector<std::string> payload_schema;

  bool operator==(const Cell& other) const {
    return id == other.id && position == other.position && kind == other.kind &&
           directions == other.directions && payload_schema == other.payload_schema;
  }
};

// Unordered pair stored as (min, max).
using CellPair = std::pair<CellId, CellId>;
using SeparatorSet = std::set<CellPair>;

inline CellPair make_pair_key(CellId a, CellId b) { return a < b ? CellPair{a, b} : CellPair{b, a}; }

// Neighborhood predicate: squared center distance <= 4R^2 (tangent circles are neighbors).
template <typename DerivedU, typename DerivedV>
bool neighbor_predicate(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v,
                        typename DerivedU::Scalar radius) {
  return (u - v).squaredNorm() <= typename DerivedU::Scalar(4) * radius * radius;
}

using Adjacency = std::vector<std::vector<CellId>>;

// Pairwise predicate over all cells, minus separator pairs. Lists are sorted.
// Uses a uniform grid of 2R buckets, so cost is linear for bounded density.
Adjacency build_adjacency(std::span<const Cell> cells, double radius, const SeparatorSet& separators);

// Target of one direction of a cell; nullopt when the translated point hits no neighbor.
struct Successor {
  std::size_t direction = 0;
  std::optional<CellId> target;

  bool operator==(const Successor&) const = default;
};

using SuccessorTable = std::vector<std::vector<Successor>>;

// Throws Error(kAmbiguousTarget) if two neighbors lie within tolerance of one translated point.
SuccessorTable resolve_directed_successors(std::span<const Cell> cells, const Adjacency& adjacency,
                                           double position_tolerance);

// Immutable once constructed; safe to share between concurrent readers.
class NetTopology {
 public:
  NetTopology() = default;

  // Cells must be ordered by id with ids 0..n-1. A missing tolerance defaults to R/100.
  NetTopology(double radius, std::vector<Cell> cells, SeparatorSet separators = {},
              std::optional<double> position_tolerance = std::nullopt);

  double radius() const { return radius_; }
  double position_tolerance() const { return position_tolerance_; }
  std::size_t size() const { return cells_.size(); }

  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(CellId id) const { return cells_.at(id); }
  const SeparatorSet& separators() const { return separators_; }

  std::span<const CellId> neighbors(CellId id) const { return adjacency_.at(id); }
  std::span<const Successor> successors(CellId id) const { return successors_.at(id); }
  const Adjacency& adjacency() const { return adjacency_; }

  bool adjacent(CellId u, CellId v) const;

  // Field-for-field comparison of the defining data (derived tables follow from it).
  bool operator==(const NetTopology& other) const {
    return radius_ == other.radius_ && position_tolerance_ == other.position_tolerance_ &&
           cells_ == other.cells_ && separators_ == other.separators_;
  }

 private:
  double radius_ = 1.0;
  double position_tolerance_ = 0.01;
  std::vector<Cell> cells_;
  SeparatorSet separators_;
  Adjacency adjacency_;
  SuccessorTable successors_;
};

struct ProbabilityViolation {
  CellId cell = 0;
  double sum = 0.0;
  std::string reason;
};

struct DanglingDirection {
  CellId cell = 0;
  std::size_t direction = 0;
};

struct ValidationReport {
  std::vector<CellId> isolated;
  std::vector<ProbabilityViolation> probability_violations;
  std::vector<DanglingDirection> dangling;
  std::vector<CellPair> duplicate_positions;

  // Dangling directions and duplicates are warnings only.
  bool valid() const { return isolated.empty() && probability_violations.empty(); }
  bool empty() const {
    return valid() && dangling.empty() && duplicate_positions.empty();
  }
};

ValidationReport validate_static_structure(const NetTopology& net);

std::string format_report(const ValidationReport& report);

}  // namespace qcn
