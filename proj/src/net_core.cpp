#include "qcn/net_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "qcn/error.hpp"

namespace qcn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kAmbiguousTarget: return "AmbiguousTarget";
    case ErrorKind::kNoDirections: return "NoDirections";
    case ErrorKind::kModeMismatch: return "ModeMismatch";
    case ErrorKind::kDegenerateEdge: return "DegenerateEdge";
    case ErrorKind::kUnreachableBranch: return "UnreachableBranch";
    case ErrorKind::kDuplicateAssignment: return "DuplicateAssignment";
    case ErrorKind::kUnknownCell: return "UnknownCell";
    case ErrorKind::kInvalidGraph: return "InvalidGraph";
    case ErrorKind::kInvalidSite: return "InvalidSite";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kEmptyTrace: return "EmptyTrace";
    case ErrorKind::kSyntaxError: return "SyntaxError";
    case ErrorKind::kValidationFailed: return "ValidationFailed";
    case ErrorKind::kHashMismatch: return "HashMismatch";
    case ErrorKind::kNoSnapshots: return "NoSnapshots";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

double Payload::get(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

std::string check_payload(const Payload& payload) {
  double composition_sum = 0.0;
  bool has_composition = false;
  for (const auto& [key, value] : payload.values) {
    if (!std::isfinite(value)) return "attribute '" + key + "' is not finite";
    if (key.starts_with(Payload::kCompositionPrefix)) {
      if (value < 0.0 || value > 1.0) return "composition fraction '" + key + "' outside [0,1]";
      composition_sum += value;
      has_composition = true;
    }
  }
  if (has_composition && std::abs(composition_sum - 1.0) > kProbabilityTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "composition fractions sum to " << composition_sum;
    return os.str();
  }
  return {};
}

double generation_amount(const GenerationFunction& function, std::int64_t step) {
  struct Visitor {
    std::int64_t step;
    double operator()(const ConstantRate& f) const { return f.rate; }
    double operator()(const PeriodicRate& f) const {
      return f.period > 0 && step % f.period == 0 ? f.amount : 0.0;
    }
    double operator()(const TableRate& f) const {
      auto it = f.amounts.find(step);
      return it == f.amounts.end() ? 0.0 : it->second;
    }
  };
  return std::visit(Visitor{step}, function);
}

std::string_view kind_name(const CellKind& kind) {
  struct Visitor {
    std::string_view operator()(const RegularCell&) const { return "regular"; }
    std::string_view operator()(const GeneratorSpec&) const { return "generator"; }
    std::string_view operator()(const OutflowCell&) const { return "outflow"; }
    std::string_view operator()(const TurnstileSpec&) const { return "turnstile"; }
  };
  return std::visit(Visitor{}, kind);
}

namespace {

struct BucketKey {
  std::int64_t x, y, z;
  bool operator==(const BucketKey&) const = default;
};

struct BucketHash {
  std::size_t operator()(const BucketKey& k) const noexcept {
    std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
    h ^= static_cast<std::size_t>(k.y) * 19349663u;
    h ^= static_cast<std::size_t>(k.z) * 83492791u;
    return h;
  }
};

BucketKey bucket_of(const Position& p, double width) {
  return {static_cast<std::int64_t>(std::floor(p.x() / width)),
          static_cast<std::int64_t>(std::floor(p.y() / width)),
          static_cast<std::int64_t>(std::floor(p.z() / width))};
}

}  // namespace

Adjacency build_adjacency(std::span<const Cell> cells, double radius, const SeparatorSet& separators) {
  if (!(radius > 0.0)) throw Error(ErrorKind::kInvalidArgument, "radius must be positive");
  const double width = 2.0 * radius;
  std::unordered_map<BucketKey, std::vector<CellId>, BucketHash> grid;
  for (CellId i = 0; i < cells.size(); ++i) grid[bucket_of(cells[i].position, width)].push_back(i);

  Adjacency adjacency(cells.size());
  for (CellId u = 0; u < cells.size(); ++u) {
    const BucketKey home = bucket_of(cells[u].position, width);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({home.x + dx, home.y + dy, home.z + dz});
          if (it == grid.end()) continue;
          for (CellId v : it->second) {
            if (v == u) continue;
            if (!neighbor_predicate(cells[u].position, cells[v].position, radius)) continue;
            if (separators.count(make_pair_key(u, v))) continue;
            adjacency[u].push_back(v);
          }
        }
      }
    }
    std::sort(adjacency[u].begin(), adjacency[u].end());
  }
  return adjacency;
}

SuccessorTable resolve_directed_successors(std::span<const Cell> cells, const Adjacency& adjacency,
                                           double position_tolerance) {
  SuccessorTable table(cells.size());
  for (CellId u = 0; u < cells.size(); ++u) {
    const auto& directions = cells[u].directions;
    table[u].reserve(directions.size());
    for (std::size_t d = 0; d < directions.size(); ++d) {
      const Position target = cells[u].position + directions[d].delta;
      std::optional<CellId> match;
      for (CellId v : adjacency[u]) {
        if ((cells[v].position - target).norm() > position_tolerance) continue;
        if (match) {
          throw Error(ErrorKind::kAmbiguousTarget,
                      "direction " + std::to_string(d) + " of cell " + std::to_string(u) +
                          " matches cells " + std::to_string(*match) + " and " + std::to_string(v));
        }
        match = v;
      }
      table[u].push_back({d, match});
    }
  }
  return table;
}

NetTopology::NetTopology(double radius, std::vector<Cell> cells, SeparatorSet separators,
                         std::optional<double> position_tolerance)
    : radius_(radius),
      position_tolerance_(position_tolerance.value_or(radius / 100.0)),
      cells_(std::move(cells)),
      separators_(std::move(separators)) {
  if (!(radius_ > 0.0)) throw Error(ErrorKind::kInvalidArgument, "radius must be positive");
  if (!(position_tolerance_ >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "position tolerance must be non-negative");
  }
  for (CellId i = 0; i < cells_.size(); ++i) {
    if (cells_[i].id != i) {
      throw Error(ErrorKind::kInvalidArgument,
                  "cell ids must be dense and ordered; position " + std::to_string(i) + " holds id " +
                      std::to_string(cells_[i].id));
    }
    if (!cells_[i].position.allFinite()) {
      throw Error(ErrorKind::kInvalidArgument, "cell " + std::to_string(i) + " has a non-finite position");
    }
  }
  for (const auto& [a, b] : separators_) {
    if (a >= cells_.size() || b >= cells_.size()) {
      throw Error(ErrorKind::kUnknownCell, "separator pair references a missing cell");
    }
  }
  adjacency_ = build_adjacency(cells_, radius_, separators_);
  successors_ = resolve_directed_successors(cells_, adjacency_, position_tolerance_);
}

bool NetTopology::adjacent(CellId u, CellId v) const {
  const auto& list = adjacency_.at(u);
  return std::binary_search(list.begin(), list.end(), v);
}

ValidationReport validate_static_structure(const NetTopology& net) {
  ValidationReport report;
  for (const Cell& cell : net.cells()) {
    if (net.neighbors(cell.id).empty()) report.isolated.push_back(cell.id);

    if (!cell.directions.empty()) {
      double sum = 0.0;
      for (const auto& d : cell.directions) {
        if (d.probability < 0.0 || d.probability > 1.0 || !std::isfinite(d.probability)) {
          report.probability_violations.push_back({cell.id, d.probability, "probability outside [0,1]"});
        }
        if (d.delta.isZero(0.0)) {
          report.probability_violations.push_back({cell.id, d.probability, "zero translation vector"});
        }
        sum += d.probability;
      }
      if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        report.probability_violations.push_back({cell.id, sum, "probabilities do not sum to 1"});
      }
    }

    for (const auto& s : net.successors(cell.id)) {
      if (!s.target) report.dangling.push_back({cell.id, s.direction});
    }
  }

  auto check_duplicate = [&](CellId u, CellId v) {
    if ((net.cell(u).position - net.cell(v).position).norm() <= net.position_tolerance()) {
      report.duplicate_positions.push_back({u, v});
    }
  };
  for (CellId u = 0; u < net.size(); ++u) {
    for (CellId v : net.neighbors(u)) {
      if (u < v) check_duplicate(u, v);
    }
  }
  for (const auto& [u, v] : net.separators()) check_duplicate(u, v);
  std::sort(report.duplicate_positions.begin(), report.duplicate_positions.end());
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << (report.valid() ? "valid" : "invalid") << '\n';
  for (CellId id : report.isolated) os << "isolated cell " << id << '\n';
  for (const auto& v : report.probability_violations) {
    os << "cell " << v.cell << ": " << v.reason << " (" << v.sum << ")\n";
  }
  for (const auto& d : report.dangling) {
    os << "warning: cell " << d.cell << " direction " << d.direction << " is dangling\n";
  }
  for (const auto& [u, v] : report.duplicate_positions) {
    os << "warning: cells " << u << " and " << v << " share a position\n";
  }
  return os.str();
}

}  // namespace qcn
