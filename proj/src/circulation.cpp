#include "qcn/circulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qcn/error.hpp"

namespace qcn {

std::string_view to_string(Mode mode) { return mode == Mode::kDiscrete ? "discrete" : "continuous"; }

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kMoved: return "moved";
    case EventKind::kBlocked: return "blocked";
    case EventKind::kGenerated: return "generated";
    case EventKind::kAbsorbed: return "absorbed";
    case EventKind::kTurnstileClosed: return "turnstile_closed";
    case EventKind::kTurnstileOpened: return "turnstile_opened";
  }
  return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (EventKind k : {EventKind::kMoved, EventKind::kBlocked, EventKind::kGenerated, EventKind::kAbsorbed,
                      EventKind::kTurnstileClosed, EventKind::kTurnstileOpened}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

NetState NetState::discrete(const NetTopology& net) {
  NetState s;
  s.mode = Mode::kDiscrete;
  s.occupied.assign(net.size(), 0);
  s.payloads.assign(net.size(), Payload{});
  s.turnstiles.assign(net.size(), TurnstileRuntime{});
  s.generator_queues.assign(net.size(), 0);
  s.outflows.assign(net.size(), OutflowTotals{});
  return s;
}

NetState NetState::continuous(const NetTopology& net) {
  NetState s = discrete(net);
  s.mode = Mode::kContinuous;
  s.levels = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.size()));
  return s;
}

CellState NetState::cell_state(CellId id) const {
  if (mode == Mode::kContinuous) return ContinuousLevel{levels(static_cast<Eigen::Index>(id))};
  if (occupied.at(id)) return Transitable{payloads[id]};
  return NonTransitable{};
}

void NetState::set_cell_state(CellId id, CellState state) {
  if (id >= size()) throw Error(ErrorKind::kUnknownCell, "cell " + std::to_string(id));
  if (auto* level = std::get_if<ContinuousLevel>(&state)) {
    if (mode != Mode::kContinuous) throw Error(ErrorKind::kModeMismatch, "continuous level in a discrete net");
    if (!(level->level >= 0.0) || !std::isfinite(level->level)) {
      throw Error(ErrorKind::kInvalidArgument, "levels must be finite and non-negative");
    }
    levels(static_cast<Eigen::Index>(id)) = level->level;
    return;
  }
  if (mode != Mode::kDiscrete) throw Error(ErrorKind::kModeMismatch, "discrete state in a continuous net");
  if (auto* token = std::get_if<Transitable>(&state)) {
    if (auto problem = check_payload(token->payload); !problem.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "cell " + std::to_string(id) + ": " + problem);
    }
    occupied[id] = 1;
    payloads[id] = std::move(token->payload);
  } else {
    occupied[id] = 0;
    payloads[id] = Payload{};
  }
  turnstiles[id] = TurnstileRuntime{};
}

std::size_t NetState::transitable_count() const {
  return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

double NetState::total_level() const {
  // Neumaier summation.
  double sum = 0.0;
  double compensation = 0.0;
  for (Eigen::Index i = 0; i < levels.size(); ++i) {
    const double x = levels(i);
    const double t = sum + x;
    compensation += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + compensation;
}

std::int64_t NetState::absorbed_count() const {
  std::int64_t total = 0;
  for (const auto& o : outflows) total += o.count;
  return total;
}

bool NetState::operator==(const NetState& other) const {
  return mode == other.mode && occupied == other.occupied && payloads == other.payloads &&
         levels.size() == other.levels.size() && (levels.array() == other.levels.array()).all() &&
         turnstiles == other.turnstiles && generator_queues == other.generator_queues &&
         outflows == other.outflows && generated == other.generated;
}

ConstraintHook occupancy_rule() {
  return {std::string(blocked_reason::kOccupied),
          [](const NetTopology&, const NetState& state, CellId, CellId to) { return state.occupied[to] == 0; }};
}

ConstraintHook turnstile_closed_rule() {
  return {std::string(blocked_reason::kTurnstileClosed),
          [](const NetTopology& net, const NetState& state, CellId, CellId to) {
            return !std::holds_alternative<TurnstileSpec>(net.cell(to).kind) || state.turnstiles[to].open;
          }};
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t choose_direction(const Cell& cell, Rng& rng) {
  const auto& directions = cell.directions;
  if (directions.empty()) throw Error(ErrorKind::kNoDirections, "cell " + std::to_string(cell.id));
  if (directions.size() == 1) return 0;
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    cumulative += directions[i].probability;
    if (u < cumulative) return i;
  }
  return directions.size() - 1;
}

namespace {

void require_mode(const NetState& state, Mode mode) {
  if (state.mode != mode) {
    throw Error(ErrorKind::kModeMismatch, "state is " + std::string(to_string(state.mode)) + ", step requires " +
                                              std::string(to_string(mode)));
  }
}

TraceEvent blocked(std::int64_t step, CellId cell, std::string_view reason, std::optional<CellId> target = {}) {
  TraceEvent e;
  e.step = step;
  e.kind = EventKind::kBlocked;
  e.cell = cell;
  e.target = target;
  e.reason = std::string(reason);
  return e;
}

bool is_turnstile(const NetTopology& net, CellId id) {
  return std::holds_alternative<TurnstileSpec>(net.cell(id).kind);
}

}  // namespace

std::vector<Proposal> propose_discrete_transitions(const NetTopology& net, const NetState& state,
                                                   const SimulationClock& clock, Rng& rng,
                                                   std::span<const ConstraintHook> hooks,
                                                   std::vector<TraceEvent>& events) {
  require_mode(state, Mode::kDiscrete);
  static const ConstraintHook kBuiltins[] = {occupancy_rule(), turnstile_closed_rule()};

  std::vector<Proposal> proposals;
  for (CellId u = 0; u < net.size(); ++u) {
    if (!state.occupied[u]) continue;
    if (is_turnstile(net, u) && !state.turnstiles[u].open) {
      events.push_back(blocked(clock.step, u, blocked_reason::kHeld));
      continue;
    }
    const Cell& cell = net.cell(u);
    if (cell.directions.empty()) {
      events.push_back(blocked(clock.step, u, blocked_reason::kNoDirection));
      continue;
    }
    const std::size_t d = choose_direction(cell, rng);
    const auto target = net.successors(u)[d].target;
    if (!target) {
      events.push_back(blocked(clock.step, u, blocked_reason::kDangling));
      continue;
    }
    const ConstraintHook* denied = nullptr;
    for (const auto& hook : kBuiltins) {
      if (!hook.allow(net, state, u, *target)) {
        denied = &hook;
        break;
      }
    }
    if (!denied) {
      for (const auto& hook : hooks) {
        if (!hook.allow(net, state, u, *target)) {
          denied = &hook;
          break;
        }
      }
    }
    if (denied) {
      events.push_back(blocked(clock.step, u, denied->name, target));
      continue;
    }
    proposals.push_back({u, *target, d});
  }
  return proposals;
}

std::vector<Proposal> resolve_conflicts(std::span<const Proposal> proposals, std::int64_t step,
                                        std::vector<TraceEvent>& events, ConflictPolicy policy, Rng* rng) {
  std::vector<Proposal> sorted(proposals.begin(), proposals.end());
  std::sort(sorted.begin(), sorted.end(), [](const Proposal& a, const Proposal& b) {
    return a.to != b.to ? a.to < b.to : a.from < b.from;
  });

  std::vector<Proposal> accepted;
  std::vector<Proposal> losers;
  for (std::size_t begin = 0; begin < sorted.size();) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end].to == sorted[begin].to) ++end;
    std::size_t winner = begin;
    if (policy == ConflictPolicy::kSeededRandom && end - begin > 1) {
      if (rng == nullptr) throw Error(ErrorKind::kInvalidArgument, "seeded conflict policy requires an rng");
      winner = begin + static_cast<std::size_t>(uniform01(*rng) * static_cast<double>(end - begin));
    }
    for (std::size_t i = begin; i < end; ++i) (i == winner ? accepted : losers).push_back(sorted[i]);
    begin = end;
  }

  auto by_source = [](const Proposal& a, const Proposal& b) { return a.from < b.from; };
  std::sort(accepted.begin(), accepted.end(), by_source);
  std::sort(losers.begin(), losers.end(), by_source);
  for (const auto& p : losers) events.push_back(blocked(step, p.from, blocked_reason::kConflict, p.to));
  return accepted;
}

std::int64_t turnstile_hold_steps(const TurnstileSpec& spec, double theta) {
  const double ratio = spec.tau / theta;
  const double nearest = std::round(ratio);
  const double steps = std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio) ? nearest : std::ceil(ratio);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(steps));
}

void update_generator(const NetTopology& net, NetState& state, CellId generator, std::int64_t step,
                      std::vector<TraceEvent>& events) {
  const auto& spec = std::get<GeneratorSpec>(net.cell(generator).kind);
  const double amount = generation_amount(spec.function, step);

  if (state.mode == Mode::kContinuous) {
    if (amount <= 0.0) return;
    state.levels(static_cast<Eigen::Index>(generator)) += amount;
    TraceEvent e;
    e.step = step;
    e.kind = EventKind::kGenerated;
    e.cell = generator;
    e.amount = amount;
    events.push_back(std::move(e));
    return;
  }

  state.generator_queues[generator] += std::llround(amount);
  if (state.occupied[generator] || state.generator_queues[generator] == 0) return;
  --state.generator_queues[generator];
  state.occupied[generator] = 1;
  state.payloads[generator] = spec.payload_template;
  ++state.generated;
  TraceEvent e;
  e.step = step;
  e.kind = EventKind::kGenerated;
  e.cell = generator;
  e.payload = spec.payload_template;
  e.amount = 1.0;
  events.push_back(std::move(e));
}

void update_turnstile(const NetTopology& net, NetState& state, CellId turnstile, const SimulationClock& clock,
                      std::vector<TraceEvent>& events) {
  const auto& spec = std::get<TurnstileSpec>(net.cell(turnstile).kind);
  auto& runtime = state.turnstiles[turnstile];
  TraceEvent e;
  e.step = clock.step;
  e.cell = turnstile;
  if (runtime.open) {
    if (!state.occupied[turnstile] || runtime.released) return;
    runtime.open = false;
    runtime.closed_at = clock.step;
    e.kind = EventKind::kTurnstileClosed;
  } else {
    if (clock.step < *runtime.closed_at + turnstile_hold_steps(spec, clock.theta)) return;
    runtime.open = true;
    runtime.closed_at.reset();
    runtime.released = true;
    e.kind = EventKind::kTurnstileOpened;
  }
  e.payload = state.payloads[turnstile];
  events.push_back(std::move(e));
}

void update_outflow(NetState& state, CellId outflow, std::int64_t step, std::vector<TraceEvent>& events) {
  auto& totals = state.outflows[outflow];
  TraceEvent e;
  e.step = step;
  e.kind = EventKind::kAbsorbed;
  e.cell = outflow;
  if (state.mode == Mode::kContinuous) {
    const double level = state.levels(static_cast<Eigen::Index>(outflow));
    if (level <= 0.0) return;
    totals.level += level;
    state.levels(static_cast<Eigen::Index>(outflow)) = 0.0;
    e.amount = level;
    events.push_back(std::move(e));
    return;
  }
  if (!state.occupied[outflow]) return;
  Payload& payload = state.payloads[outflow];
  ++totals.count;
  for (const auto& [key, value] : payload.values) totals.attribute_sums[key] += value;
  e.payload = std::move(payload);
  e.amount = 1.0;
  state.occupied[outflow] = 0;
  payload = Payload{};
  events.push_back(std::move(e));
}

std::vector<TraceEvent> apply_discrete_step(const NetTopology& net, NetState& state, SimulationClock& clock,
                                            Rng& rng, const StepOptions& options) {
  require_mode(state, Mode::kDiscrete);
  std::vector<TraceEvent> events;
  const auto& cells = net.cells();

  for (const Cell& c : cells) {
    if (std::holds_alternative<GeneratorSpec>(c.kind)) update_generator(net, state, c.id, clock.step, events);
  }
  for (const Cell& c : cells) {
    if (std::holds_alternative<TurnstileSpec>(c.kind)) update_turnstile(net, state, c.id, clock, events);
  }

  const auto proposals = propose_discrete_transitions(net, state, clock, rng, options.hooks, events);
  const auto accepted = resolve_conflicts(proposals, clock.step, events, options.conflict_policy, &rng);

  for (const Proposal& p : accepted) {
    state.payloads[p.to] = std::move(state.payloads[p.from]);
    state.payloads[p.from] = Payload{};
    state.occupied[p.to] = 1;
    state.occupied[p.from] = 0;
    state.turnstiles[p.from] = TurnstileRuntime{};
    state.turnstiles[p.to] = TurnstileRuntime{};
    TraceEvent e;
    e.step = clock.step;
    e.kind = EventKind::kMoved;
    e.cell = p.from;
    e.target = p.to;
    e.payload = state.payloads[p.to];
    events.push_back(std::move(e));
  }

  for (const Cell& c : cells) {
    if (std::holds_alternative<OutflowCell>(c.kind)) update_outflow(state, c.id, clock.step, events);
  }
  ++clock.step;
  return events;
}

std::vector<TraceEvent> apply_continuous_step(const NetTopology& net, NetState& state, SimulationClock& clock,
                                              double delta) {
  require_mode(state, Mode::kContinuous);
  if (!(delta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "delta must be positive");
  std::vector<TraceEvent> events;
  const auto& cells = net.cells();

  for (const Cell& c : cells) {
    if (std::holds_alternative<GeneratorSpec>(c.kind)) update_generator(net, state, c.id, clock.step, events);
  }

  const Eigen::VectorXd current = state.levels;
  Eigen::VectorXd inflow = Eigen::VectorXd::Zero(current.size());
  Eigen::VectorXd remaining = current;
  for (const Cell& c : cells) {
    const auto u = static_cast<Eigen::Index>(c.id);
    const double available = current(u);
    if (available <= 0.0) continue;
    double wanted = 0.0;
    for (const auto& s : net.successors(c.id)) {
      if (s.target) wanted += delta * c.directions[s.direction].probability;
    }
    if (wanted <= 0.0) continue;
    const bool clamped = wanted > available;
    const double scale = clamped ? available / wanted : 1.0;
    double sent = 0.0;
    for (const auto& s : net.successors(c.id)) {
      if (!s.target) continue;
      const double amount = delta * c.directions[s.direction].probability * scale;
      inflow(static_cast<Eigen::Index>(*s.target)) += amount;
      sent += amount;
    }
    remaining(u) = clamped ? 0.0 : std::max(0.0, available - sent);
  }
  state.levels = remaining + inflow;

  for (const Cell& c : cells) {
    if (std::holds_alternative<OutflowCell>(c.kind)) update_outflow(state, c.id, clock.step, events);
  }
  ++clock.step;
  return events;
}

Snapshot take_snapshot(const NetState& state, std::int64_t step) {
  Snapshot snap;
  snap.step = step;
  for (CellId i = 0; i < state.size(); ++i) {
    if (state.mode == Mode::kContinuous) {
      snap.cells.push_back({i, false, state.levels(static_cast<Eigen::Index>(i)), {}});
    } else if (state.occupied[i]) {
      snap.cells.push_back({i, true, 0.0, state.payloads[i]});
    }
  }
  return snap;
}

std::vector<std::string> prepare_run(const NetTopology& net, Mode mode, double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw Error(ErrorKind::kInvalidConfig, "theta must be positive");
  std::vector<std::string> warnings;
  auto check_amount = [&](CellId id, double amount) {
    if (!(amount >= 0.0) || !std::isfinite(amount)) {
      throw Error(ErrorKind::kInvalidConfig, "generator " + std::to_string(id) + " has a negative amount");
    }
    if (mode == Mode::kDiscrete && amount != std::floor(amount)) {
      throw Error(ErrorKind::kInvalidConfig,
                  "generator " + std::to_string(id) + " must produce whole tokens in discrete mode");
    }
  };
  for (const Cell& c : net.cells()) {
    if (const auto* g = std::get_if<GeneratorSpec>(&c.kind)) {
      if (const auto* f = std::get_if<ConstantRate>(&g->function)) check_amount(c.id, f->rate);
      if (const auto* f = std::get_if<PeriodicRate>(&g->function)) {
        if (f->period < 1) throw Error(ErrorKind::kInvalidConfig, "generator period must be >= 1");
        check_amount(c.id, f->amount);
      }
      if (const auto* f = std::get_if<TableRate>(&g->function)) {
        for (const auto& [step, amount] : f->amounts) check_amount(c.id, amount);
      }
      if (auto problem = check_payload(g->payload_template); !problem.empty()) {
        throw Error(ErrorKind::kInvalidConfig, "generator " + std::to_string(c.id) + " template: " + problem);
      }
    }
    if (const auto* t = std::get_if<TurnstileSpec>(&c.kind)) {
      if (!(t->tau > 0.0)) throw Error(ErrorKind::kInvalidConfig, "turnstile tau must be positive");
      const std::int64_t steps = turnstile_hold_steps(*t, theta);
      if (std::abs(static_cast<double>(steps) * theta - t->tau) > 1e-9 * std::max(1.0, t->tau)) {
        std::ostringstream os;
        os.precision(17);
        os << "turnstile " << c.id << ": tau " << t->tau << " rounded up to " << steps << " steps";
        warnings.push_back(os.str());
      }
    }
  }
  return warnings;
}

Trace run(const NetTopology& net, NetState& state, const RunOptions& options) {
  if (options.steps < 0) throw Error(ErrorKind::kInvalidArgument, "step count must be non-negative");
  if (options.stride < 1) throw Error(ErrorKind::kInvalidArgument, "stride must be >= 1");
  if (state.size() != net.size()) throw Error(ErrorKind::kInvalidArgument, "state does not match net size");
  require_mode(state, options.mode);

  Trace trace;
  trace.warnings = prepare_run(net, options.mode, options.theta);
  trace.header = {"", options.theta, options.mode, options.seed, options.steps};

  SimulationClock clock{options.theta, 0};
  Rng rng(options.seed);
  const StepOptions step_options{options.conflict_policy, options.hooks};

  trace.snapshots.push_back(take_snapshot(state, 0));
  for (std::int64_t s = 0; s < options.steps; ++s) {
    auto events = options.mode == Mode::kDiscrete ? apply_discrete_step(net, state, clock, rng, step_options)
                                                  : apply_continuous_step(net, state, clock, options.delta);
    if (options.observer) options.observer(s, events, state);
    trace.events.insert(trace.events.end(), std::make_move_iterator(events.begin()),
                        std::make_move_iterator(events.end()));
    if ((s + 1) % options.stride == 0 || s + 1 == options.steps) trace.snapshots.push_back(take_snapshot(state, s + 1));
  }
  return trace;
}

}  // namespace qcn
