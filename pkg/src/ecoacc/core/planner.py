"""Eco-driving optimizer: backward DP over the spatial (v, t) grid.

Stage ``k`` covers the route segment ``[k*ds, (k+1)*ds)``. Values live on a
velocity grid shared by all stages and a per-stage time grid (the time box);
successor values are interpolated bilinearly, and a transition touching an
infeasible corner is rejected.
"""
import dataclasses
import logging
import time
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from ecoacc.config import PlannerConfig, PowertrainParams, VehicleParams
from ecoacc.core.costmap import CostMap, cost_lookup, interpolate
from ecoacc.core.grid import bilinear
from ecoacc.core.powertrain import wheel_torque_bounds
from ecoacc.core.signals import LiveSpat, SignalTimingSpec, infeasible_downstream, infeasible_first
from ecoacc.core.vehicle import RouteSpec, State, acceleration, spatial_update, torque_for_accel
from ecoacc.errors import NoFeasiblePath, StalePolicyBeyondHorizon
from ecoacc.metrics.energy import wheel_energy_cost_variant

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanningContext:
    route: RouteSpec
    vehicle: VehicleParams
    powertrain: PowertrainParams
    cost_map: CostMap
    planner: PlannerConfig
    signals: Tuple[SignalTimingSpec, ...]
    red_estimates: Tuple[float, ...]

    @cached_property
    def v_grid(self) -> np.ndarray:
        grid = np.linspace(self.vehicle.speed_floor, self.route.max_speed, self.planner.speed_points)
        grid.setflags(write=False)
        return grid

    @property
    def horizon_steps(self) -> int:
        return max(1, int(round(self.planner.horizon_m / self.route.step_m)))

    def replace(self, **changes) -> "PlanningContext":
        return dataclasses.replace(self, **changes)

    def with_planner(self, **updates) -> "PlanningContext":
        return self.replace(planner=self.planner.model_copy(update=updates))


def stage_cost(v, t_w, soc: float, cost_map: CostMap, time_weight: float, step_m: float = 1.0):
    """``h = ds * (g_c*(v, T_w; SOC) + lambda / v)``, summed per metre of the step."""
    g = interpolate(cost_map, v, t_w, soc)
    if np.ndim(g) == 0:
        g = cost_lookup(cost_map, float(v), float(t_w), soc)
    return step_m * (g + time_weight / np.asarray(v, dtype=float))


def slack_cost(t, tau_h, d, d_h, d_f, t_desired, v_avg, beta):
    """Soft arrival-time penalty; only a late shortfall (gamma > 0) is priced."""
    gamma = (d_f - (d + d_h)) - (t_desired - (np.asarray(t, dtype=float) + tau_h)) * v_avg
    return np.where(gamma > 0, beta * gamma * gamma, 0.0)


def horizon_slack(position_m: float, t, context: PlanningContext):
    p = context.planner
    return slack_cost(t, 0.0, position_m, 0.0, context.route.length_m, p.desired_travel_time_s, p.average_speed_mps, p.slack_weight)


def time_box(k_rel: int, t0: float, context: PlanningContext) -> Tuple[float, float]:
    p = context.planner
    ds = context.route.step_m
    lo = t0 + k_rel * ds / context.route.max_speed
    hi = min(t0 + k_rel * ds / context.vehicle.speed_floor, max(p.desired_travel_time_s, t0) + p.time_margin_s)
    return lo, max(hi, lo + p.time_band_s)


class _Transition(NamedTuple):
    torque: np.ndarray  # (n_v, n_c), ordered by |T_w|
    stage: np.ndarray  # (n_v, n_c)
    v_next: np.ndarray  # (n_v, n_c)
    t_next: np.ndarray  # (n_v, n_t, n_c)
    total: np.ndarray  # (n_v, n_t, n_c)
    brake: np.ndarray  # (n_v,) lowest admissible torque


class StageModel:
    def __init__(
        self,
        context: PlanningContext,
        start: int,
        end: int,
        t0: float,
        soc: float,
        live: Optional[LiveSpat],
        signals: Tuple[SignalTimingSpec, ...],
        red_estimates: Tuple[float, ...],
        origin: Optional[int] = None,
    ):
        self.context = context
        self.start = start
        self.end = end
        self.soc = soc
        self.live = live
        self.signals = signals
        self.red_estimates = red_estimates
        self.v_grid = context.v_grid
        n_t = context.planner.time_points
        # time boxes open at ``origin`` (the anchor, or the corridor start for tail passes)
        origin = start if origin is None else origin
        self.t_grids = np.array([np.linspace(*time_box(k - origin, t0, context), n_t) for k in range(start, end + 1)])
        self.lights = {step: n for n, step in enumerate(context.route.intersections) if start < step <= end}
        self.first = live.intersection if live is not None else None

    def candidates(self, k: int, v: np.ndarray):
        ctx = self.context
        grade = ctx.route.grade_at(k)
        lo, hi = wheel_torque_bounds(v, ctx.powertrain, ctx.vehicle)
        lo = np.maximum(lo, torque_for_accel(ctx.vehicle.accel_min, v, grade, ctx.vehicle))
        hi = np.minimum(hi, torque_for_accel(ctx.vehicle.accel_max, v, grade, ctx.vehicle))
        if ctx.planner.energy_cost == "power-map":
            lo = np.maximum(lo, ctx.cost_map.torque_grid[0])
            hi = np.minimum(hi, ctx.cost_map.torque_grid[-1])

        fractions = np.linspace(0.0, 1.0, ctx.planner.torque_candidates)
        torque = lo[:, None] + fractions * (hi - lo)[:, None]
        order = np.argsort(np.abs(torque), axis=1, kind="stable")
        torque = np.take_along_axis(torque, order, axis=1)
        valid = np.broadcast_to((hi >= lo)[:, None], torque.shape)
        return torque, valid, lo

    def stage_costs(self, v: np.ndarray, torque: np.ndarray) -> np.ndarray:
        ctx = self.context
        ds = ctx.route.step_m
        lam = ctx.planner.time_weight
        if ctx.planner.energy_cost == "wheel-energy":
            return wheel_energy_cost_variant(v[:, None], torque, ctx.vehicle.wheel_radius, ds) + ds * lam / v[:, None]
        return stage_cost(v[:, None], torque, self.soc, ctx.cost_map, lam, ds)

    def blocked(self, n: int, t_arrival: np.ndarray) -> np.ndarray:
        spec, red_est = self.signals[n], self.red_estimates[n]
        if n == self.first:
            return infeasible_first(t_arrival - self.live.timestamp_s, self.live, spec, red_est)
        return infeasible_downstream(t_arrival, spec, red_est)

    def transition(self, k: int, v: np.ndarray, t: np.ndarray, next_values: np.ndarray) -> _Transition:
        ctx = self.context
        ds = ctx.route.step_m
        v_top = min(ctx.route.speed_limit_at(k), self.v_grid[-1])

        torque, valid, brake = self.candidates(k, v)
        a = acceleration(v[:, None], torque, ctx.route.grade_at(k), ctx.vehicle)
        v_next, dt = spatial_update(v[:, None], a, ds)
        stage = self.stage_costs(v, torque)
        ok = valid & (v_next > ctx.vehicle.speed_floor) & (v_next <= v_top + 1e-9) & np.isfinite(stage)

        v_safe = np.where(ok, v_next, self.v_grid[-1])
        dt_safe = np.where(ok, dt, ds / self.v_grid[-1])
        t_next = t[None, :, None] + dt_safe[:, None, :]
        ok = np.broadcast_to(ok[:, None, :], t_next.shape)
        light = self.lights.get(k + 1)
        if light is not None:
            ok = ok & ~self.blocked(light, t_next)

        t_grid = self.t_grids[k + 1 - self.start]
        future = bilinear(
            self.v_grid,
            t_grid,
            next_values,
            np.broadcast_to(v_safe[:, None, :], t_next.shape),
            np.clip(t_next, t_grid[0], t_grid[-1]),
        )
        total = np.where(ok, stage[:, None, :] + future + self.overflow(t_next, t_grid[-1]), np.inf)
        return _Transition(torque, stage, v_next, t_next, total, brake)

    def overflow(self, t_next: np.ndarray, t_max: float) -> np.ndarray:
        """Lateness past the time box, priced like the arrival slack."""
        p = self.context.planner
        late = np.maximum(t_next - t_max, 0.0) * p.average_speed_mps
        return p.slack_weight * late * late

    def backward(self, terminal_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n_stages = self.end - self.start
        n_v, n_t = len(self.v_grid), self.t_grids.shape[1]
        value = np.empty((n_stages + 1, n_v, n_t))
        torque = np.empty((n_stages, n_v, n_t))
        value[n_stages] = terminal_values

        for k in range(self.end - 1, self.start - 1, -1):
            i = k - self.start
            step = self.transition(k, self.v_grid, self.t_grids[i], value[i + 1])
            best = np.argmin(step.total, axis=2)[..., None]
            value[i] = np.take_along_axis(step.total, best, axis=2)[..., 0]
            chosen = np.take_along_axis(np.broadcast_to(step.torque[:, None, :], step.total.shape), best, axis=2)[..., 0]
            torque[i] = np.where(np.isfinite(value[i]), chosen, step.brake[:, None])

        return torque, value

    def best_action(self, k: int, v: float, t: float, next_values: np.ndarray):
        """Minimiser from an exact (off-grid) state: ``(value, torque, stage, v', t')``."""
        step = self.transition(k, np.array([v]), np.array([t]), next_values)
        c = int(np.argmin(step.total[0, 0]))
        return (
            float(step.total[0, 0, c]),
            float(step.torque[0, c]),
            float(step.stage[0, c]),
            float(step.v_next[0, c]),
            float(step.t_next[0, 0, c]),
        )


@dataclass(frozen=True)
class PolicyMap:
    anchor_step: int
    step_m: float
    t0: float
    soc: float
    v_grid: np.ndarray
    t_grids: np.ndarray  # (H + 1, n_t)
    torque: np.ndarray  # (H, n_v, n_t)
    value: np.ndarray  # (H + 1, n_v, n_t)
    grade: np.ndarray  # (H,)
    speed_limit: np.ndarray  # (H,)
    anchor_state: State
    anchor_torque: float
    anchor_value: float
    live: Optional[LiveSpat]
    signals: Tuple[SignalTimingSpec, ...]
    red_estimates: Tuple[float, ...]
    vehicle: VehicleParams
    solve_time_s: float = 0.0

    @property
    def horizon_steps(self) -> int:
        return self.torque.shape[0]

    @property
    def anchor_position(self) -> float:
        return self.anchor_step * self.step_m

    @property
    def horizon_m(self) -> float:
        return self.horizon_steps * self.step_m

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.value[:-1])


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.setflags(write=False)


def solve_dp(
    state: State,
    position_m: float,
    live: Optional[LiveSpat],
    terminal,
    soc: float,
    context: PlanningContext,
    horizon_m: Optional[float] = None,
) -> PolicyMap:
    """Backward induction from the horizon end to the anchor step.

    ``terminal`` is a ``TerminalCostTable`` (or anything with ``on_grid``);
    ``None`` means a zero terminal value.
    """
    started = time.perf_counter()
    route = context.route
    start = min(route.step_of(position_m), route.n_steps - 1)
    n_steps = context.horizon_steps if horizon_m is None else max(1, int(round(horizon_m / route.step_m)))
    end = min(start + n_steps, route.n_steps)

    model = StageModel(context, start, end, state.t, soc, live, context.signals, context.red_estimates)
    if terminal is None:
        terminal_values = np.zeros((len(model.v_grid), model.t_grids.shape[1]))
    else:
        terminal_values = terminal.on_grid(model.v_grid, model.t_grids[-1])

    torque, value = model.backward(terminal_values)

    v0 = float(np.clip(max(state.v, context.vehicle.speed_floor), model.v_grid[0], model.v_grid[-1]))
    anchor_value, anchor_torque, _, _, _ = model.best_action(start, v0, state.t, value[1])
    if not np.isfinite(anchor_value):
        raise NoFeasiblePath(f"no feasible transition from v={state.v:.2f} m/s, t={state.t:.1f} s at {position_m:.0f} m")

    grade = np.array([route.grade_at(k) for k in range(start, end)])
    limits = np.array([route.speed_limit_at(k) for k in range(start, end)])
    _freeze(torque, value, model.t_grids, grade, limits)
    elapsed = time.perf_counter() - started
    logger.debug("Solved %d stages from %.0f m in %.2f s", end - start, position_m, elapsed)

    return PolicyMap(
        anchor_step=start,
        step_m=route.step_m,
        t0=state.t,
        soc=soc,
        v_grid=model.v_grid,
        t_grids=model.t_grids,
        torque=torque,
        value=value,
        grade=grade,
        speed_limit=limits,
        anchor_state=State(v0, state.t),
        anchor_torque=anchor_torque,
        anchor_value=anchor_value,
        live=live,
        signals=context.signals,
        red_estimates=context.red_estimates,
        vehicle=context.vehicle,
        solve_time_s=elapsed,
    )


def query_policy(policy: PolicyMap, d_now: float, v: float, t: float) -> Tuple[float, float]:
    if d_now > policy.anchor_position + policy.horizon_m + 1e-9:
        raise StalePolicyBeyondHorizon(
            f"{d_now:.1f} m is beyond the policy horizon [{policy.anchor_position:.0f}, "
            f"{policy.anchor_position + policy.horizon_m:.0f}] m"
        )
    k = int(round(d_now / policy.step_m)) - policy.anchor_step
    k = min(max(k, 0), policy.horizon_steps - 1)

    v_grid, t_grid = policy.v_grid, policy.t_grids[k]
    dv = (v - v_grid) / (v_grid[1] - v_grid[0])
    dt = (t - t_grid) / (t_grid[1] - t_grid[0])
    distance = dv[:, None] ** 2 + dt[None, :] ** 2
    feasible = np.isfinite(policy.value[k])
    if feasible.any():
        distance = np.where(feasible, distance, np.inf)
    i, j = np.unravel_index(int(np.argmin(distance)), distance.shape)
    torque = float(policy.torque[k, i, j])

    v_eff = max(v, policy.vehicle.speed_floor)
    a = float(acceleration(v_eff, torque, policy.grade[k], policy.vehicle))
    v_next, _ = spatial_update(v_eff, a, policy.step_m)
    v_ref = float(np.clip(v_next, 0.0, policy.speed_limit[k]))
    return torque, v_ref


def planned_trajectory(policy: PolicyMap, context: PlanningContext) -> pd.DataFrame:
    """Open-loop rollout of the optimal torques from the exact anchor state."""
    end = policy.anchor_step + policy.horizon_steps
    model = StageModel(
        context, policy.anchor_step, end, policy.t0, policy.soc, policy.live, policy.signals, policy.red_estimates
    )
    v, t = policy.anchor_state.v, policy.anchor_state.t
    rows = []
    reached = policy.anchor_step
    for i, k in enumerate(range(policy.anchor_step, end)):
        value, torque, stage, v_next, t_next = model.best_action(k, v, t, policy.value[i + 1])
        if not np.isfinite(value):
            logger.warning("Planned trajectory leaves the feasible set at step %d", k)
            break
        rows.append({"step": k, "position_m": k * policy.step_m, "v": v, "t": t, "T_w": torque, "stage_cost": stage})
        v, t = v_next, t_next
        reached = k + 1

    rows.append({"step": reached, "position_m": reached * policy.step_m, "v": v, "t": t, "T_w": np.nan, "stage_cost": np.nan})
    return pd.DataFrame(rows, columns=["step", "position_m", "v", "t", "T_w", "stage_cost"])
