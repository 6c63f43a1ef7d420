#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "qcn/net_core.hpp"

namespace qcn {

enum class Mode { kDiscrete, kContinuous };

std::string_view to_string(Mode mode);

// Per-cell state as seen through the accessor API. The engine itself keeps
// flat arrays (see NetState).
struct NonTransitable {
  bool operator==(const NonTransitable&) const = default;
};
struct Transitable {
  Payload payload;
  bool operator==(const Transitable&) const = default;
};
struct ContinuousLevel {
  double level = 0.0;
  bool operator==(const ContinuousLevel&) const = default;
};
using CellState = std::variant<NonTransitable, Transitable, ContinuousLevel>;

// Changeable turnstile parameters. `released` marks an occupant whose hold is
// already served, so a blocked departure does not restart the delay.
struct TurnstileRuntime {
  bool open = true;
  std::optional<std::int64_t> closed_at;
  bool released = false;

  bool operator==(const TurnstileRuntime&) const = default;
};

struct OutflowTotals {
  std::int64_t count = 0;
  double level = 0.0;
  std::map<std::string, double> attribute_sums;

  bool operator==(const OutflowTotals&) const = default;
};

struct NetState {
  Mode mode = Mode::kDiscrete;
  std::vector<std::uint8_t> occupied;
  std::vector<Payload> payloads;
  Eigen::VectorXd levels;
  std::vector<TurnstileRuntime> turnstiles;
  std::vector<std::int64_t> generator_queues;
  std::vector<OutflowTotals> outflows;
  std::int64_t generated = 0;

  static NetState discrete(const NetTopology& net);
  static NetState continuous(const NetTopology& net);

  std::size_t size() const { return occupied.size(); }

  CellState cell_state(CellId id) const;
  // Throws Error(kModeMismatch) when the variant does not match the state's mode.
  void set_cell_state(CellId id, CellState state);

  std::size_t transitable_count() const;
  // Compensated sum of all continuous levels.
  double total_level() const;
  std::int64_t absorbed_count() const;

  bool operator==(const NetState& other) const;
};

struct SimulationClock {
  double theta = 1.0;
  std::int64_t step = 0;

  double time() const { return static_cast<double>(step) * theta; }
};

enum class EventKind { kMoved, kBlocked, kGenerated, kAbsorbed, kTurnstileClosed, kTurnstileOpened };

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

namespace blocked_reason {
inline constexpr std::string_view kOccupied = "occupied";
inline constexpr std::string_view kConflict = "conflict";
inline constexpr std::string_view kDangling = "dangling";
inline constexpr std::string_view kNoDirection = "no_direction";
inline constexpr std::string_view kHeld = "held";
inline constexpr std::string_view kTurnstileClosed = "turnstile_closed";
}  // namespace blocked_reason

// `step` is the index s of the transition from t = s*theta to (s+1)*theta.
// `target` is set for Moved and for Blocked events whose target was resolved.
// `amount` carries continuous quantities (generated or absorbed level).
struct TraceEvent {
  std::int64_t step = 0;
  EventKind kind = EventKind::kMoved;
  CellId cell = 0;
  std::optional<CellId> target;
  std::string reason;
  std::optional<Payload> payload;
  double amount = 0.0;

  bool operator==(const TraceEvent&) const = default;
};

struct ConstraintHook {
  std::string name;
  std::function<bool(const NetTopology&, const NetState&, CellId from, CellId to)> allow;
};

// Built-in rules, always evaluated before user hooks.
ConstraintHook occupancy_rule();
ConstraintHook turnstile_closed_rule();

using Rng = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits; independent of the standard library's distributions.
double uniform01(Rng& rng);

// Inverse-CDF sample over the ordered direction list. A single direction consumes no randomness.
std::size_t choose_direction(const Cell& cell, Rng& rng);

struct Proposal {
  CellId from = 0;
  CellId to = 0;
  std::size_t direction = 0;

  bool operator==(const Proposal&) const = default;
};

enum class ConflictPolicy { kLowestId, kSeededRandom };

struct StepOptions {
  ConflictPolicy conflict_policy = ConflictPolicy::kLowestId;
  std::span<const ConstraintHook> hooks;
};

// Reads only the current state. Blocked outcomes are appended to `events`.
std::vector<Proposal> propose_discrete_transitions(const NetTopology& net, const NetState& state,
                                                   const SimulationClock& clock, Rng& rng,
                                                   std::span<const ConstraintHook> hooks,
                                                   std::vector<TraceEvent>& events);

// At most one accepted proposal per target; output sorted by source.
std::vector<Proposal> resolve_conflicts(std::span<const Proposal> proposals, std::int64_t step,
                                        std::vector<TraceEvent>& events,
                                        ConflictPolicy policy = ConflictPolicy::kLowestId,
                                        Rng* rng = nullptr);

// Whole steps a turnstile holds its token: ceil(tau / theta), at least 1.
std::int64_t turnstile_hold_steps(const TurnstileSpec& spec, double theta);

void update_generator(const NetTopology& net, NetState& state, CellId generator, std::int64_t step,
                      std::vector<TraceEvent>& events);
void update_turnstile(const NetTopology& net, NetState& state, CellId turnstile,
                      const SimulationClock& clock, std::vector<TraceEvent>& events);
void update_outflow(NetState& state, CellId outflow, std::int64_t step, std::vector<TraceEvent>& events);

// One synchronous step; mutates `state` and advances `clock`. Phases:
// generators, turnstiles, propose, resolve, apply, outflows.
std::vector<TraceEvent> apply_discrete_step(const NetTopology& net, NetState& state, SimulationClock& clock,
                                            Rng& rng, const StepOptions& options = {});

// Transfers delta * p along every resolved successor link, scaled down per
// source so no level goes negative. Turnstiles behave as regular cells here.
std::vector<TraceEvent> apply_continuous_step(const NetTopology& net, NetState& state, SimulationClock& clock,
                                              double delta);

struct CellRecord {
  CellId cell = 0;
  bool occupied = false;
  double level = 0.0;
  Payload payload;

  bool operator==(const CellRecord&) const = default;
};

// Discrete snapshots list Transitable cells only; continuous snapshots list every cell.
struct Snapshot {
  std::int64_t step = 0;
  std::vector<CellRecord> cells;

  bool operator==(const Snapshot&) const = default;
};

struct TraceHeader {
  std::string net_hash;
  double theta = 1.0;
  Mode mode = Mode::kDiscrete;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;

  bool operator==(const TraceHeader&) const = default;
};

struct Trace {
  TraceHeader header;
  std::vector<Snapshot> snapshots;
  std::vector<TraceEvent> events;
  std::vector<std::string> warnings;

  bool operator==(const Trace& other) const {
    return header == other.header && snapshots == other.snapshots && events == other.events;
  }
};

Snapshot take_snapshot(const NetState& state, std::int64_t step);

// Invoked after each step with that step's events; may edit payloads.
using StepObserver = std::function<void(std::int64_t step, std::span<const TraceEvent> events, NetState& state)>;

struct RunOptions {
  Mode mode = Mode::kDiscrete;
  std::int64_t steps = 0;
  double theta = 1.0;
  double delta = 1.0;
  std::uint64_t seed = 0;
  std::int64_t stride = 1;
  ConflictPolicy conflict_policy = ConflictPolicy::kLowestId;
  std::vector<ConstraintHook> hooks;
  StepObserver observer;
};

// Checks kind parameters against the mode and theta; returns warnings (e.g. rounded tau).
// Throws Error(kInvalidConfig) on invalid generator or turnstile parameters.
std::vector<std::string> prepare_run(const NetTopology& net, Mode mode, double theta);

// Snapshots every `stride` steps plus the last; `state` holds the final state on return.
Trace run(const NetTopology& net, NetState& state, const RunOptions& options);

}  // namespace qcn
