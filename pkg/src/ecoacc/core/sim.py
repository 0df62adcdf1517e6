"""Two-rate closed loop: control ticks against asynchronous replans.

Planner solves run on a background worker but only take effect at
deterministic activation ticks (submission tick plus the modeled latency),
so a run is a pure function of its configuration and scenario.
"""
import logging
import math
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ecoacc.config import EcoAccConfig, PowertrainParams, TrafficConfig, VehicleParams, config_hash
from ecoacc.core.acc import AccController, LightAhead, Violation, safety_monitor
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.costmap import CostMap, cached_cost_map
from ecoacc.core.planner import PlanningContext
from ecoacc.core.powertrain import (
    TorqueSplit,
    battery_step,
    ecms_split,
    gear_ratio,
    split_fuel_power,
    terminal_power,
)
from ecoacc.core.signals import (
    HistoricalSpat,
    LeadSpawn,
    Phase,
    Scenario,
    SignalTimingSpec,
    generate_history,
    live_spat,
    mean_signals,
    phase_at,
    phases,
    red_estimates,
)
from ecoacc.core.terminal import TAIL_VERSION, TerminalCostModel, terminal_scenarios
from ecoacc.core.vehicle import RouteSpec, acceleration, advance, build_route, time_to_cover
from ecoacc.errors import EcoAccError, NoFeasiblePath, SimulationTimeout, StalePolicyBeyondHorizon
from ecoacc.plugins.interface import ConstantReference, ControllerPlugin, Snapshot

logger = logging.getLogger(__name__)

_LEAD_STOP_MARGIN_M = 0.05

TRACE_COLUMNS = [
    "tick",
    "time_s",
    "position_m",
    "v",
    "v_ref",
    "T_w_cmd",
    "branch",
    "T_m",
    "T_e",
    "engine_on",
    "T_brk",
    "soc",
    "fuel_power_w",
    "elec_power_w",
    "battery_current_a",
    "accel",
    "lead_gap_m",
    "policy_id",
    "phases",
]


@dataclass(frozen=True)
class PlantState:
    time_s: float
    position_m: float
    v: float
    soc: float


@dataclass(frozen=True)
class PowerFlow:
    fuel_power: float
    elec_power: float
    current: float


@dataclass(frozen=True)
class LeadState:
    position_m: float
    v: float
    spawn: LeadSpawn


@dataclass
class SimTrace:
    frame: pd.DataFrame
    totals: Dict[str, float]
    violations: List[Violation] = field(default_factory=list)
    activations: List[Tuple[int, int, int]] = field(default_factory=list)  # (policy id, submitted, active)

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False, float_format="%.9g")


@dataclass
class EpisodeArtifacts:
    """Corridor inputs shared by every episode of a batch."""

    config: EcoAccConfig
    route: RouteSpec
    cost_map: CostMap
    history: HistoricalSpat
    terminal: TerminalCostModel
    deterministic_spat: bool = False

    def planning_context(
        self,
        signals: Sequence[SignalTimingSpec],
        reds: Optional[Sequence[float]] = None,
    ) -> PlanningContext:
        return PlanningContext(
            route=self.route,
            vehicle=self.config.vehicle,
            powertrain=self.config.powertrain,
            cost_map=self.cost_map,
            planner=self.config.planner,
            signals=tuple(signals),
            red_estimates=tuple(red_estimates(self.history) if reds is None else reds),
        )


def prepare_artifacts(
    config: EcoAccConfig,
    cost_map: Optional[CostMap] = None,
    cache: Optional[ArtifactCache] = None,
    workers: Optional[int] = None,
    deterministic_spat: bool = False,
) -> EpisodeArtifacts:
    route = build_route(config.route)
    if cost_map is None:
        cost_map = cached_cost_map(config.powertrain, config.vehicle, config.costmap, cache=cache, workers=workers)
    history = generate_history(config.route, config.history)

    base = PlanningContext(
        route=route,
        vehicle=config.vehicle,
        powertrain=config.powertrain,
        cost_map=cost_map,
        planner=config.planner,
        signals=mean_signals(config.route),
        red_estimates=red_estimates(history),
    )
    planner = config.planner
    scenarios = terminal_scenarios(
        config.route, config.traffic, planner.terminal_scenarios, planner.terminal_seed, deterministic=deterministic_spat
    )
    soc = float(cost_map.soc_grid[cost_map.plane_index(config.sim.initial_soc)])
    key = None
    if cache is not None:
        digest = config_hash(config.route, config.vehicle, config.powertrain, config.costmap, planner, config.traffic)
        key = cache.get_cache_key("terminal", TAIL_VERSION, digest, f"{soc:.2f}", str(deterministic_spat))
    terminal = TerminalCostModel(base, scenarios, soc, cache=cache, cache_key=key)
    return EpisodeArtifacts(config, route, cost_map, history, terminal, deterministic_spat)


def plant_step(
    state: PlantState,
    split: TorqueSplit,
    dt: float,
    grade: float,
    vehicle: VehicleParams,
    powertrain: PowertrainParams,
) -> Tuple[PlantState, PowerFlow]:
    ratio = float(gear_ratio(state.v, powertrain))
    t_w = split.wheel_torque(ratio, powertrain.clutch_efficiency)
    a = float(acceleration(state.v, t_w, grade, vehicle))
    position, v = advance(state.position_m, state.v, a, dt)

    p_b = terminal_power(split, state.v, powertrain, vehicle)
    soc, p_elec, current = battery_step(p_b, state.soc, powertrain, dt)
    flow = PowerFlow(split_fuel_power(split, state.v, powertrain, vehicle), p_elec, current)
    return PlantState(state.time_s + dt, position, v, soc), flow


def idm_accel(v: float, desired_speed: float, time_headway: float, traffic: TrafficConfig, obstacle=None) -> float:
    """Intelligent driver model; ``obstacle`` is ``(gap m, obstacle speed m/s)``."""
    free = 1.0 - (v / desired_speed) ** traffic.exponent
    if obstacle is None:
        return traffic.max_accel * free
    gap, speed = obstacle
    gap = max(gap, 1e-3)
    desired_gap = traffic.min_gap_m + max(
        0.0, v * time_headway + v * (v - speed) / (2.0 * math.sqrt(traffic.max_accel * traffic.comfort_decel))
    )
    return traffic.max_accel * (free - (desired_gap / gap) ** 2)


def lead_vehicle_update(
    lead: LeadState,
    dt: float,
    traffic: TrafficConfig,
    predecessor: Optional[LeadState] = None,
    light: Optional[LightAhead] = None,
) -> LeadState:
    spawn = lead.spawn
    accel = idm_accel(lead.v, spawn.desired_speed, spawn.time_headway_s, traffic)
    if predecessor is not None:
        gap = predecessor.position_m - lead.position_m - traffic.length_m
        accel = min(accel, idm_accel(lead.v, spawn.desired_speed, spawn.time_headway_s, traffic, (gap, predecessor.v)))
    stop_line = None
    if light is not None and _lead_stops_for(lead.v, light, traffic):
        stop_line = lead.position_m + light.distance_m
        stop_gap = light.distance_m + traffic.min_gap_m
        accel = min(accel, idm_accel(lead.v, spawn.desired_speed, spawn.time_headway_s, traffic, (stop_gap, 0.0)))
    accel = max(accel, -traffic.max_decel)
    position, v = advance(lead.position_m, lead.v, accel, dt)
    # never creep past a stop line the lead is holding for
    if stop_line is not None and position > stop_line - _LEAD_STOP_MARGIN_M:
        position, v = max(lead.position_m, stop_line - _LEAD_STOP_MARGIN_M), 0.0
    return LeadState(position, v, spawn)


def _lead_stops_for(v: float, light: LightAhead, traffic: TrafficConfig) -> bool:
    if light.phase is Phase.GREEN or light.distance_m < 0:
        return False
    if light.phase is Phase.RED:
        return True
    return light.distance_m > 0 and v * v / (2.0 * light.distance_m) <= traffic.comfort_decel


def light_ahead(route: RouteSpec, signals: Sequence[SignalTimingSpec], position_m: float, t: float) -> Optional[LightAhead]:
    for n, step in enumerate(route.intersections):
        stop_line = step * route.step_m
        if stop_line > position_m:
            return LightAhead(stop_line - position_m, phase_at(signals[n], t), n)
    return None


def _live_for(route: RouteSpec, signals: Sequence[SignalTimingSpec], position_m: float, t: float):
    light = light_ahead(route, signals, position_m, t)
    return None if light is None else live_spat(signals[light.index], t, light.index)


def _spawn_leads(scenario: Scenario, route: RouteSpec, traffic: TrafficConfig, dt: float) -> List[LeadState]:
    """Run the leads from their entry times up to t = 0; front of the platoon first."""
    spawns = sorted(scenario.leads, key=lambda s: s.entry_time_s)
    if not spawns:
        return []
    leads: List[LeadState] = []
    pending = list(spawns)
    t = spawns[0].entry_time_s
    while t < -1e-9:
        while pending and pending[0].entry_time_s <= t + 1e-9:
            spawn = pending.pop(0)
            leads.append(LeadState(0.0, spawn.entry_speed, spawn))
        leads = _advance_leads(leads, route, scenario.signals, traffic, t, min(dt, -t))
        t += min(dt, -t)
    for spawn in pending:
        leads.append(LeadState(0.0, spawn.entry_speed, spawn))
    return leads


def _advance_leads(leads, route, signals, traffic, t, dt) -> List[LeadState]:
    updated = []
    for i, lead in enumerate(leads):
        predecessor = leads[i - 1] if i > 0 else None
        light = light_ahead(route, signals, lead.position_m, t)
        updated.append(lead_vehicle_update(lead, dt, traffic, predecessor, light))
    return updated


def _nearest_lead(leads: Sequence[LeadState], position_m: float, traffic: TrafficConfig):
    ahead = [lead for lead in leads if lead.position_m > position_m]
    if not ahead:
        return None
    lead = min(ahead, key=lambda l: l.position_m)
    return lead.position_m - position_m - traffic.length_m, lead.v


def _phase_letters(signals: Sequence[SignalTimingSpec], t: float) -> str:
    return "".join(phase.value[0].upper() for phase in phases(signals, t))


class _Replan:
    def __init__(self, future: Future, submitted: int, activation: Optional[int]):
        self.future = future
        self.submitted = submitted
        self.activation = activation


def _timed_plan(controller: ControllerPlugin, snapshot: Snapshot) -> Tuple[Any, float]:
    started = time.perf_counter()
    try:
        result = controller.plan(snapshot)
    except NoFeasiblePath as e:
        logger.warning("Replan at %.1f s infeasible, braking: %s", snapshot.time_s, e)
        result = ConstantReference(0.0)
    return result, time.perf_counter() - started


def run_episode(artifacts: EpisodeArtifacts, scenario: Scenario, controller: ControllerPlugin) -> SimTrace:
    config = artifacts.config
    sim = config.sim
    route = artifacts.route
    signals = scenario.signals
    dt = sim.control_period_s
    period = controller.replan_period(artifacts)
    replan_ticks = None if period is None else max(1, int(round(period / dt)))
    latency_ticks = int(round(sim.planner_latency_s / dt))

    plant = PlantState(0.0, 0.0, sim.initial_speed_mps, sim.initial_soc)
    leads = _spawn_leads(scenario, route, config.traffic, dt)
    acc = AccController(config.acc, config.vehicle, config.powertrain)
    controller.setup(artifacts, scenario)

    def snapshot(tick: int) -> Snapshot:
        live = _live_for(route, signals, plant.position_m, plant.time_s)
        return Snapshot(tick, plant.time_s, plant.position_m, plant.v, plant.soc, live)

    reference, _ = _timed_plan(controller, snapshot(0))
    policy_id = 0
    activations = [(0, 0, 0)]
    pending: Optional[_Replan] = None
    rows, violations = [], []
    fuel_j = elec_j = charge_c = 0.0
    last_ref = sim.initial_speed_mps
    tick = 0

    with ThreadPoolExecutor(max_workers=1) as executor:
        while plant.position_m < route.length_m:
            if plant.time_s > sim.max_time_s:
                raise SimulationTimeout(f"episode {scenario.scenario_id} exceeded {sim.max_time_s:.0f} s at {plant.position_m:.0f} m")

            if pending is not None and pending.activation is None:
                _, elapsed = pending.future.result()
                pending.activation = pending.submitted + max(1, math.ceil(elapsed / dt))
            if pending is not None and tick >= pending.activation:
                reference, _ = pending.future.result()
                policy_id += 1
                activations.append((policy_id, pending.submitted, tick))
                pending = None

            if replan_ticks is not None and tick > 0 and tick % replan_ticks == 0 and pending is None:
                future = executor.submit(_timed_plan, controller, snapshot(tick))
                activation = None if sim.measured_latency else tick + latency_ticks
                pending = _Replan(future, tick, activation)
                if activation == tick:
                    reference, _ = future.result()
                    policy_id += 1
                    activations.append((policy_id, tick, tick))
                    pending = None

            try:
                v_ref = reference.reference(plant.position_m, plant.v, plant.time_s)
            except StalePolicyBeyondHorizon as e:
                logger.warning("%s; holding the last reference", e)
                v_ref = last_ref
            last_ref = v_ref

            k = route.step_of(min(plant.position_m, route.length_m - 1e-9))
            grade = route.grade_at(k)
            lead = _nearest_lead(leads, plant.position_m, config.traffic)
            light = light_ahead(route, signals, plant.position_m, plant.time_s)
            command = acc.step(v_ref, plant.v, dt, lead, light, grade)
            split, _ = ecms_split(plant.v, command.torque, plant.soc, config.powertrain, config.vehicle)

            previous = plant
            plant, flow = plant_step(plant, split, dt, grade, config.vehicle, config.powertrain)
            leads = _advance_leads(leads, route, signals, config.traffic, previous.time_s, dt)

            fuel_j += flow.fuel_power * dt
            elec_j += flow.elec_power * dt
            charge_c += flow.current * dt
            accel = (plant.v - previous.v) / dt

            crossings = _red_crossings(route, signals, previous, plant)
            gap_after = _nearest_lead(leads, plant.position_m, config.traffic)
            found = safety_monitor(
                plant.time_s,
                plant.v,
                accel,
                None if gap_after is None else gap_after[0],
                None if gap_after is None else gap_after[1],
                crossings,
                config.acc,
                config.monitor,
            )
            violations.extend(found)

            rows.append(
                (
                    tick,
                    previous.time_s,
                    previous.position_m,
                    previous.v,
                    v_ref,
                    command.torque,
                    command.branch,
                    split.motor_torque,
                    split.engine_torque,
                    split.engine_on,
                    split.brake_torque,
                    previous.soc,
                    flow.fuel_power,
                    flow.elec_power,
                    flow.current,
                    accel,
                    np.nan if lead is None else lead[0],
                    policy_id,
                    _phase_letters(signals, previous.time_s),
                )
            )
            tick += 1

        if pending is not None:
            pending.future.cancel()

    totals = {
        "fuel_energy_j": fuel_j,
        "battery_energy_j": elec_j,
        "battery_charge_c": charge_c,
        "travel_time_s": plant.time_s,
        "distance_m": route.length_m,
        "initial_soc": sim.initial_soc,
        "final_soc": plant.soc,
        "red_violations": sum(v.kind == "red-light" for v in violations),
        "gap_violations": sum(v.kind == "gap" for v in violations),
        "accel_violations": sum(v.kind == "accel" for v in violations),
    }
    frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    logger.debug("Episode %d finished in %.1f s with %d replans", scenario.scenario_id, plant.time_s, policy_id)
    return SimTrace(frame, totals, violations, activations)


def _red_crossings(route: RouteSpec, signals: Sequence[SignalTimingSpec], before: PlantState, after: PlantState) -> List[int]:
    crossed = []
    for n, step in enumerate(route.intersections):
        stop_line = step * route.step_m
        if before.position_m < stop_line <= after.position_m:
            share = (stop_line - before.position_m) / (after.position_m - before.position_m)
            t_cross = before.time_s + share * (after.time_s - before.time_s)
            if phase_at(signals[n], t_cross) is Phase.RED:
                crossed.append(n)
    return crossed


def replay_plan(plan: pd.DataFrame, artifacts: EpisodeArtifacts, soc: Optional[float] = None) -> float:
    """Drive the plant open loop with a planned torque schedule; returns the arrival time."""
    config = artifacts.config
    route = artifacts.route
    dt = config.sim.control_period_s
    steps = plan.dropna(subset=["T_w"])
    first, last = int(steps["step"].iloc[0]), int(plan["step"].iloc[-1])
    torque = dict(zip(steps["step"].astype(int), steps["T_w"]))
    plant = PlantState(float(plan["t"].iloc[0]), first * route.step_m, float(plan["v"].iloc[0]), config.sim.initial_soc if soc is None else soc)

    end_m = last * route.step_m
    while plant.position_m < end_m - 1e-6:
        k = route.step_of(plant.position_m + 1e-6)
        grade = route.grade_at(k)
        split, _ = ecms_split(plant.v, torque[k], plant.soc, config.powertrain, config.vehicle)
        # shorten the tick that would cross a segment boundary so every torque acts on its own segment
        a = float(acceleration(plant.v, torque[k], grade, config.vehicle))
        tick = min(dt, time_to_cover((k + 1) * route.step_m - plant.position_m, plant.v, a))
        plant, _ = plant_step(plant, split, tick, grade, config.vehicle, config.powertrain)
        if plant.v <= 0.0:
            raise EcoAccError(f"replayed plan stalls at {plant.position_m:.1f} m")
    return plant.time_s
