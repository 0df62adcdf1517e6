"""Longitudinal vehicle dynamics in the spatial domain and the static route."""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from ecoacc.config import RouteConfig, VehicleParams
from ecoacc.errors import ConfigError, NonPositiveNextSpeed


@dataclass(frozen=True)
class State:
    v: float
    t: float

    def __post_init__(self):
        if self.v < 0 or self.t < 0:
            raise ValueError(f"State requires v >= 0 and t >= 0, got v={self.v}, t={self.t}")


@dataclass(frozen=True)
class RouteSpec:
    length_m: float
    step_m: float
    grade: np.ndarray
    speed_limit: np.ndarray
    intersections: Tuple[int, ...]

    @property
    def n_steps(self) -> int:
        return len(self.grade)

    @property
    def max_speed(self) -> float:
        return float(self.speed_limit.max())

    def grade_at(self, k: int) -> float:
        return float(self.grade[min(max(k, 0), self.n_steps - 1)])

    def speed_limit_at(self, k: int) -> float:
        return float(self.speed_limit[min(max(k, 0), self.n_steps - 1)])

    def step_of(self, position_m: float) -> int:
        return int(math.floor(position_m / self.step_m + 1e-9))

    def intersection_positions(self) -> Tuple[float, ...]:
        return tuple(k * self.step_m for k in self.intersections)


def build_route(config: RouteConfig) -> RouteSpec:
    n_steps = int(round(config.length_m / config.step_m))
    if n_steps < 1 or abs(n_steps * config.step_m - config.length_m) > 1e-9:
        raise ConfigError(f"Route length {config.length_m} m is not a multiple of step {config.step_m} m")

    centers = (np.arange(n_steps) + 0.5) * config.step_m
    grade = np.full(n_steps, config.grade_rad, dtype=float)
    speed_limit = np.full(n_steps, config.speed_limit_mps, dtype=float)

    if config.grade_csv is not None:
        grade = _overlay_segments(grade, centers, config.grade_csv)
    if config.speed_limit_csv is not None:
        speed_limit = _overlay_segments(speed_limit, centers, config.speed_limit_csv)
    if np.any(speed_limit <= 0):
        raise ConfigError("Speed limits must be positive")

    intersections = tuple(int(round(i.position_m / config.step_m)) for i in config.intersections)
    if any(b <= a for a, b in zip(intersections, intersections[1:])):
        raise ConfigError("Intersections collapse onto the same route step; use a finer step")

    grade.setflags(write=False)
    speed_limit.setflags(write=False)
    return RouteSpec(config.length_m, config.step_m, grade, speed_limit, intersections)


def _overlay_segments(profile: np.ndarray, centers: np.ndarray, csv_path) -> np.ndarray:
    table = pd.read_csv(csv_path)
    missing = {"start_m", "end_m", "value"} - set(table.columns)
    if missing:
        raise ConfigError(f"{csv_path}: missing columns {sorted(missing)}")

    profile = profile.copy()
    for row in table.itertuples(index=False):
        covered = (centers >= row.start_m) & (centers < row.end_m)
        profile[covered] = row.value
    return profile


def resistance_accel(v, grade, params: VehicleParams):
    return (
        params.gravity * (np.cos(grade) * params.rolling_resistance - np.sin(grade))
        + params.air_density * params.frontal_area * params.drag_coefficient * v * v / (2.0 * params.mass)
    )


def acceleration(v, t_w, grade, params: VehicleParams):
    return t_w / (params.mass * params.wheel_radius) - resistance_accel(v, grade, params)


def torque_for_accel(a, v, grade, params: VehicleParams):
    """Wheel torque that produces acceleration ``a`` at speed ``v``."""
    return params.mass * params.wheel_radius * (a + resistance_accel(v, grade, params))


def accel_bounds_check(a: float, params: VehicleParams) -> bool:
    return params.accel_min <= a <= params.accel_max


def spatial_update(v, a, ds: float):
    """Constant-acceleration step over ``ds`` metres: ``(v', dt)`` with ``v'^2 = v^2 + 2 a ds``.

    Where the vehicle stops short of ``ds`` the result is ``v' = 0`` and ``dt = inf``.
    """
    v, a = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(a, dtype=float))
    v_sq = v * v + 2.0 * a * ds
    reached = v_sq > 0.0
    v_next = np.sqrt(np.where(reached, v_sq, 0.0))
    dt = np.full(v.shape, np.inf)
    np.divide(2.0 * ds, v + v_next, out=dt, where=reached)
    return v_next, dt


def step(state: State, t_w: float, k: int, route: RouteSpec, params: VehicleParams) -> State:
    a = float(acceleration(state.v, t_w, route.grade_at(k), params))
    v_next, dt = spatial_update(state.v, a, route.step_m)
    v_next, dt = float(v_next), float(dt)
    if v_next <= params.speed_floor:
        raise NonPositiveNextSpeed(f"step {k}: v={state.v:.3f} m/s with T_w={t_w:.1f} N·m gives v'={v_next:.3f} m/s")
    return State(v_next, state.t + dt)


def time_to_cover(distance: float, v: float, a: float) -> float:
    """Time to travel ``distance`` from speed ``v`` at constant ``a``; inf if the vehicle stops first."""
    if distance <= 0.0:
        return 0.0
    _, dt = spatial_update(v, a, distance)
    return float(dt)


def advance(position: float, v: float, a: float, dt: float) -> Tuple[float, float]:
    """Constant-acceleration update over ``dt`` that stops at standstill instead of reversing."""
    v_next = v + a * dt
    if v_next >= 0.0:
        return position + v * dt + 0.5 * a * dt * dt, v_next
    if v <= 0.0:
        return position, 0.0
    return position - v * v / (2.0 * a), 0.0


def route_speed_floor(params: VehicleParams, v: Optional[float]) -> float:
    """Speed used for spatial-domain planning; standstill maps onto the speed floor."""
    if v is None:
        return params.speed_floor
    return max(v, params.speed_floor)
