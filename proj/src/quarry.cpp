#include "qcn/quarry.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "qcn/error.hpp"

namespace qcn {

Payload TipperPayload::to_payload() const {
  Payload p;
  p.set(tipper_attr::kId, static_cast<double>(id));
  p.set(tipper_attr::kVolume, rock_mass_volume);
  p.set(tipper_attr::kFuel, fuel_consumption);
  p.set(tipper_attr::kEmission, exhaust_emission);
  if (composition) {
    p.set(tipper_attr::kClearSand, composition->clear_sand);
    p.set(tipper_attr::kWater, composition->water);
    p.set(tipper_attr::kStones, composition->stones);
    p.set(tipper_attr::kClay, composition->clay);
  }
  return p;
}

TipperPayload TipperPayload::from_payload(const Payload& payload) {
  TipperPayload t;
  t.id = std::llround(payload.get(tipper_attr::kId));
  t.rock_mass_volume = payload.get(tipper_attr::kVolume);
  t.fuel_consumption = payload.get(tipper_attr::kFuel);
  t.exhaust_emission = payload.get(tipper_attr::kEmission);
  if (payload.has(tipper_attr::kClearSand)) {
    t.composition = SandComposition{payload.get(tipper_attr::kClearSand), payload.get(tipper_attr::kWater),
                                    payload.get(tipper_attr::kStones), payload.get(tipper_attr::kClay)};
  }
  return t;
}

TipperPayload on_load_complete(const TipperPayload& tipper, const LoadTemplate& load) {
  TipperPayload loaded = tipper;
  loaded.rock_mass_volume = load.volume;
  loaded.composition = load.composition;
  return loaded;
}

TipperPayload accumulate_motion_costs(const TipperPayload& tipper, double fuel, double emission) {
  TipperPayload t = tipper;
  t.fuel_consumption += fuel;
  t.exhaust_emission += emission;
  return t;
}

namespace {

void validate_config(const QuarryConfig& config) {
  if (!(config.radius > 0.0)) throw Error(ErrorKind::kInvalidConfig, "radius must be positive");
  if (!(config.theta > 0.0)) throw Error(ErrorKind::kInvalidConfig, "theta must be positive");
  if (config.excavators.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one excavator is required");
  if (config.dump_sites.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one dump site is required");
  for (const auto& ex : config.excavators) {
    if (!(ex.loading_time > 0.0)) throw Error(ErrorKind::kInvalidConfig, "loading time must be positive");
    if (!(ex.load.volume >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "load volume must be non-negative");
    const auto& c = ex.load.composition;
    for (double f : {c.clear_sand, c.water, c.stones, c.clay}) {
      if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::kInvalidConfig, "composition fraction outside [0,1]");
    }
    if (std::abs(c.sum() - 1.0) > kProbabilityTolerance) {
      throw Error(ErrorKind::kInvalidConfig, "load composition must sum to 1");
    }
  }
  if (const auto* loop = std::get_if<ClosedLoop>(&config.boundary); loop && loop->tipper_count < 1) {
    throw Error(ErrorKind::kInvalidConfig, "a closed loop needs at least one tipper");
  }
  const auto& c = config.costs;
  for (double r : {c.fuel_per_move, c.emission_per_move, c.fuel_per_idle, c.emission_per_idle}) {
    if (!(r >= 0.0)) throw Error(ErrorKind::kInvalidConfig, "cost rates must be non-negative");
  }
}

// Follows the most probable successor from `start` until the walk returns.
std::vector<CellId> haul_loop(const NetTopology& net, CellId start) {
  std::vector<CellId> loop;
  std::set<CellId> visited;
  CellId at = start;
  for (std::size_t guard = 0; guard <= net.size(); ++guard) {
    const Cell& cell = net.cell(at);
    if (cell.directions.empty()) break;
    std::size_t best = 0;
    for (std::size_t d = 1; d < cell.directions.size(); ++d) {
      if (cell.directions[d].probability > cell.directions[best].probability) best = d;
    }
    const auto next = net.successors(at)[best].target;
    if (!next) break;
    loop.push_back(*next);
    if (*next == start) return loop;
    if (!visited.insert(*next).second) break;
    at = *next;
  }
  throw Error(ErrorKind::kInvalidConfig, "haul graph does not form a loop through cell " + std::to_string(start));
}

}  // namespace

QuarryScenario build_quarry(const QuarryConfig& config) {
  validate_config(config);
  NetTopology net = build_from_graph(config.haul_graph, config.radius, config.rules);

  std::set<CellId> used;
  auto claim = [&](CellId id, const char* what) {
    if (id >= net.size()) {
      throw Error(ErrorKind::kInvalidSite, std::string(what) + " cell " + std::to_string(id) + " is not on the net");
    }
    if (!used.insert(id).second) {
      throw Error(ErrorKind::kInvalidSite, std::string(what) + " cell " + std::to_string(id) + " is already a site");
    }
  };

  std::vector<std::pair<CellId, CellKind>> kinds;
  for (const auto& ex : config.excavators) {
    claim(ex.cell, "excavator");
    kinds.emplace_back(ex.cell, TurnstileSpec{ex.loading_time});
  }
  const auto* open = std::get_if<OpenBoundary>(&config.boundary);
  for (CellId d : config.dump_sites) {
    claim(d, "dump");
    if (open) kinds.emplace_back(d, OutflowCell{});
  }
  if (open) {
    claim(open->entrance, "entrance");
    TipperPayload empty;
    kinds.emplace_back(open->entrance, GeneratorSpec{open->arrivals, empty.to_payload()});
    if (std::find(config.dump_sites.begin(), config.dump_sites.end(), open->exit) == config.dump_sites.end()) {
      claim(open->exit, "exit");
      kinds.emplace_back(open->exit, OutflowCell{});
    }
  }
  net = mark_special_cells(net, kinds);

  NetState state = NetState::discrete(net);
  if (const auto* loop = std::get_if<ClosedLoop>(&config.boundary)) {
    const auto cells = haul_loop(net, config.excavators.front().cell);
    const auto length = static_cast<std::int64_t>(cells.size());
    if (loop->tipper_count > length) {
      throw Error(ErrorKind::kInvalidConfig, "more tippers than cells on the haul loop");
    }
    for (int i = 0; i < loop->tipper_count; ++i) {
      TipperPayload tipper;
      tipper.id = i;
      const auto slot = static_cast<std::size_t>(static_cast<std::int64_t>(i) * length / loop->tipper_count);
      state.set_cell_state(cells[slot], Transitable{tipper.to_payload()});
    }
  }
  return {std::move(net), std::move(state)};
}

StepObserver make_quarry_observer(const QuarryConfig& config) {
  std::map<CellId, LoadTemplate> loads;
  for (const auto& ex : config.excavators) loads[ex.cell] = ex.load;
  const std::set<CellId> dumps(config.dump_sites.begin(), config.dump_sites.end());
  const bool closed_loop = std::holds_alternative<ClosedLoop>(config.boundary);
  const CostRates costs = config.costs;
  auto next_id = std::make_shared<std::int64_t>(closed_loop ? std::get<ClosedLoop>(config.boundary).tipper_count : 0);

  return [=](std::int64_t, std::span<const TraceEvent> events, NetState& state) {
    auto update = [&](CellId at, auto&& fn) {
      if (!state.occupied[at]) return;
      state.payloads[at] = fn(TipperPayload::from_payload(state.payloads[at])).to_payload();
    };
    std::map<CellId, CellId> moved_to;
    for (const auto& e : events) {
      if (e.kind == EventKind::kMoved) moved_to[e.cell] = *e.target;
    }
    for (const auto& e : events) {
      switch (e.kind) {
        case EventKind::kGenerated: {
          auto it = moved_to.find(e.cell);
          update(it == moved_to.end() ? e.cell : it->second, [&](TipperPayload t) {
            t.id = (*next_id)++;
            return t;
          });
          break;
        }
        case EventKind::kTurnstileOpened: {
          auto load = loads.find(e.cell);
          if (load == loads.end()) break;
          auto it = moved_to.find(e.cell);
          update(it == moved_to.end() ? e.cell : it->second,
                 [&](const TipperPayload& t) { return on_load_complete(t, load->second); });
          break;
        }
        case EventKind::kMoved:
          update(*e.target, [&](const TipperPayload& t) {
            auto moved = accumulate_motion_costs(t, costs.fuel_per_move, costs.emission_per_move);
            if (closed_loop && dumps.count(*e.target)) moved.rock_mass_volume = 0.0;
            return moved;
          });
          break;
        case EventKind::kBlocked:
          update(e.cell, [&](const TipperPayload& t) {
            return accumulate_motion_costs(t, costs.fuel_per_idle, costs.emission_per_idle);
          });
          break;
        default:
          break;
      }
    }
  };
}

QuarryRun run_quarry(const QuarryConfig& config, std::int64_t steps, std::uint64_t seed, std::int64_t stride) {
  QuarryScenario scenario = build_quarry(config);
  RunOptions options;
  options.mode = Mode::kDiscrete;
  options.steps = steps;
  options.theta = config.theta;
  options.seed = seed;
  options.stride = stride;
  options.observer = make_quarry_observer(config);
  Trace trace = run(scenario.net, scenario.initial, options);
  return {std::move(scenario.net), std::move(trace), std::move(scenario.initial)};
}

QuarryMetrics compute_metrics(const Trace& trace, const QuarryConfig& config) {
  const std::int64_t steps = trace.header.steps;
  if (steps <= 0) throw Error(ErrorKind::kEmptyTrace, "trace covers no steps");

  QuarryMetrics m;
  m.steps = steps;
  const bool closed_loop = std::holds_alternative<ClosedLoop>(config.boundary);
  const std::set<CellId> dumps(config.dump_sites.begin(), config.dump_sites.end());
  std::set<CellId> excavators;
  for (const auto& ex : config.excavators) excavators.insert(ex.cell);

  std::map<std::int64_t, std::int64_t> last_load_by_tipper;
  double cycle_sum = 0.0;
  std::int64_t cycles = 0;
  std::map<CellId, std::int64_t> closed_since;
  std::map<CellId, std::int64_t> closed_steps;

  auto deliver = [&](const Payload& payload) {
    const double volume = payload.get(tipper_attr::kVolume);
    if (volume <= 0.0) return;
    ++m.deliveries;
    m.delivered_volume += volume;
    for (const auto& [key, fraction] : payload.values) {
      if (key.starts_with(Payload::kCompositionPrefix)) {
        m.delivered_mass[key.substr(Payload::kCompositionPrefix.size())] += volume * fraction;
      }
    }
  };

  for (const auto& e : trace.events) {
    switch (e.kind) {
      case EventKind::kTurnstileOpened:
        if (!excavators.count(e.cell)) break;
        ++m.loads_completed;
        closed_steps[e.cell] += e.step - closed_since[e.cell];
        closed_since.erase(e.cell);
        if (e.payload) {
          const auto id = std::llround(e.payload->get(tipper_attr::kId));
          if (auto it = last_load_by_tipper.find(id); it != last_load_by_tipper.end()) {
            cycle_sum += static_cast<double>(e.step - it->second);
            ++cycles;
          }
          last_load_by_tipper[id] = e.step;
        }
        break;
      case EventKind::kTurnstileClosed:
        if (excavators.count(e.cell)) closed_since[e.cell] = e.step;
        break;
      case EventKind::kMoved:
        if (closed_loop && dumps.count(*e.target) && e.payload) deliver(*e.payload);
        break;
      case EventKind::kAbsorbed:
        if (!closed_loop && dumps.count(e.cell) && e.payload) deliver(*e.payload);
        break;
      default:
        break;
    }
  }
  for (const auto& [cell, since] : closed_since) closed_steps[cell] += steps - since;

  // Queue behind each excavator: the chain of tokens blocked, directly or
  // transitively, on the excavator cell within a step.
  std::map<CellId, std::int64_t> queued;
  auto begin = trace.events.begin();
  while (begin != trace.events.end()) {
    auto end = std::find_if(begin, trace.events.end(), [&](const TraceEvent& e) { return e.step != begin->step; });
    for (CellId ex : excavators) {
      std::set<CellId> chain{ex};
      for (bool grew = true; grew;) {
        grew = false;
        for (auto it = begin; it != end; ++it) {
          if (it->kind != EventKind::kBlocked || !it->target || !chain.count(*it->target)) continue;
          if (it->reason == blocked_reason::kDangling) continue;
          grew |= chain.insert(it->cell).second;
        }
      }
      queued[ex] += static_cast<std::int64_t>(chain.size()) - 1;
    }
    begin = end;
  }

  const auto total = static_cast<double>(steps);
  for (CellId ex : excavators) {
    m.utilization[ex] = static_cast<double>(closed_steps[ex]) / total;
    m.mean_queue_length[ex] = static_cast<double>(queued[ex]) / total;
  }
  m.loads_per_step = static_cast<double>(m.loads_completed) / total;
  m.throughput = m.delivered_volume / total;
  m.mean_cycle_time = cycles > 0 ? cycle_sum / static_cast<double>(cycles) : 0.0;
  return m;
}

}  // namespace qcn
