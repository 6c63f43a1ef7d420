#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qcn/circulation.hpp"
#include "qcn/net_core.hpp"
#include "qcn/synthesis.hpp"

namespace qcn {

namespace tipper_attr {
inline const std::string kId = "tipper_id";
inline const std::string kVolume = "rock_mass_volume";
inline const std::string kFuel = "fuel_consumption";
inline const std::string kEmission = "exhaust_emission";
inline const std::string kClearSand = "composition.clear_sand";
inline const std::string kWater = "composition.water";
inline const std::string kStones = "composition.stones";
inline const std::string kClay = "composition.clay";
}  // namespace tipper_attr

struct SandComposition {
  double clear_sand = 0.0;
  double water = 0.0;
  double stones = 0.0;
  double clay = 0.0;

  double sum() const { return clear_sand + water + stones + clay; }
  bool operator==(const SandComposition&) const = default;
};

// Typed view of a tipper token's payload. Volume in m^3, fuel in L, emission in kg.
struct TipperPayload {
  std::int64_t id = 0;
  double rock_mass_volume = 0.0;
  double fuel_consumption = 0.0;
  double exhaust_emission = 0.0;
  std::optional<SandComposition> composition;

  Payload to_payload() const;
  static TipperPayload from_payload(const Payload& payload);

  bool operator==(const TipperPayload&) const = default;
};

// What an excavator puts into a tipper.
struct LoadTemplate {
  double volume = 0.0;
  SandComposition composition;

  bool operator==(const LoadTemplate&) const = default;
};

// Volume and composition are overwritten; cumulative costs are kept.
TipperPayload on_load_complete(const TipperPayload& tipper, const LoadTemplate& load);

TipperPayload accumulate_motion_costs(const TipperPayload& tipper, double fuel, double emission);

struct ExcavatorSite {
  CellId cell = 0;
  double loading_time = 1.0;
  LoadTemplate load;

  bool operator==(const ExcavatorSite&) const = default;
};

struct ClosedLoop {
  int tipper_count = 1;
  bool operator==(const ClosedLoop&) const = default;
};

struct OpenBoundary {
  CellId entrance = 0;
  GenerationFunction arrivals = PeriodicRate{10, 1.0};
  CellId exit = 0;
  bool operator==(const OpenBoundary&) const = default;
};

using BoundaryMode = std::variant<ClosedLoop, OpenBoundary>;

// Linear per-step rates: moving steps accrue the move rates, blocked steps the idle rates.
struct CostRates {
  double fuel_per_move = 0.0;
  double emission_per_move = 0.0;
  double fuel_per_idle = 0.0;
  double emission_per_idle = 0.0;

  bool operator==(const CostRates&) const = default;
};

struct QuarryConfig {
  BasicGraph haul_graph;
  std::vector<BranchRule> rules;
  double radius = 1.0;
  double theta = 1.0;
  std::vector<ExcavatorSite> excavators;
  std::vector<CellId> dump_sites;
  BoundaryMode boundary = ClosedLoop{};
  CostRates costs;

  bool operator==(const QuarryConfig&) const = default;
};

struct QuarryScenario {
  NetTopology net;
  NetState initial;
};

// Throws Error(kInvalidConfig) for bad parameters and Error(kInvalidSite) for sites off the net.
QuarryScenario build_quarry(const QuarryConfig& config);

// Applies loading at TurnstileOpened, motion costs, dump resets (closed loop) and
// tipper numbering for generated tokens (open boundary).
StepObserver make_quarry_observer(const QuarryConfig& config);

struct QuarryRun {
  NetTopology net;
  Trace trace;
  NetState final_state;
};

QuarryRun run_quarry(const QuarryConfig& config, std::int64_t steps, std::uint64_t seed, std::int64_t stride = 1);

struct QuarryMetrics {
  std::int64_t steps = 0;
  std::int64_t loads_completed = 0;
  double loads_per_step = 0.0;
  std::int64_t deliveries = 0;
  double delivered_volume = 0.0;
  double mean_cycle_time = 0.0;  // 0 when no tipper completed two loads
  double throughput = 0.0;       // delivered m^3 per step
  std::map<std::string, double> delivered_mass;  // per sand component
  std::map<CellId, double> utilization;          // closed steps / steps, per excavator
  std::map<CellId, double> mean_queue_length;    // per excavator

  bool operator==(const QuarryMetrics&) const = default;
};

// Pure function of the trace events. Throws Error(kEmptyTrace) for a zero-step trace.
QuarryMetrics compute_metrics(const Trace& trace, const QuarryConfig& config);

}  // namespace qcn
