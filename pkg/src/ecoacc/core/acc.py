"""Safety layer: PI speed tracking with gap-keeping and stop-line overrides."""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ecoacc.config import AccConfig, MonitorConfig, PowertrainParams, VehicleParams
from ecoacc.core.powertrain import wheel_torque_bounds
from ecoacc.core.signals import Phase
from ecoacc.core.vehicle import torque_for_accel

_MOVING = 1e-3


@dataclass(frozen=True)
class LightAhead:
    distance_m: float
    phase: Phase
    index: int = 0


@dataclass(frozen=True)
class AccCommand:
    torque: float
    accel: float
    branch: str  # track | gap | stop | hold


@dataclass(frozen=True)
class Violation:
    time_s: float
    kind: str  # gap | red-light | accel
    detail: str


def gap_accel(v: float, gap: float, lead_speed: float, config: AccConfig) -> float:
    desired = config.min_gap_m + config.time_headway_s * v
    accel = config.gap_gain * (gap - desired) + config.relative_speed_gain * (lead_speed - v)
    if gap <= config.min_gap_m:
        return -config.emergency_decel
    if v > lead_speed:
        # constant-deceleration bound to match the lead's speed before the minimum gap
        accel = min(accel, -(v * v - lead_speed * lead_speed) / (2.0 * (gap - config.min_gap_m)))
    return accel


def stop_accel(v: float, light: LightAhead, config: AccConfig) -> Optional[float]:
    """Deceleration that brings the ego to rest at the stop line, or None to proceed."""
    if light.phase is Phase.GREEN or light.distance_m < 0:
        return None
    room = light.distance_m - config.stop_line_tolerance_m
    if room <= 0:
        return -config.emergency_decel if light.phase is Phase.RED or v <= _MOVING else None
    required = v * v / (2.0 * room)
    if light.phase is Phase.YELLOW and required > config.comfort_decel:
        return None
    approach = np.sqrt(2.0 * config.stop_activation_decel * room)
    if v >= approach:
        return -required
    return config.speed_gain * (approach - v)


def acc_command(
    v_ref: float,
    v: float,
    lead: Optional[Tuple[float, float]],
    light: Optional[LightAhead],
    config: AccConfig,
    vehicle: VehicleParams,
    powertrain: PowertrainParams,
    grade: float = 0.0,
    integral: float = 0.0,
    committed: bool = False,
) -> AccCommand:
    """Minimum of the tracking, gap-keeping and stopping demands, as a wheel torque.

    ``lead`` is ``(gap m, lead speed m/s)``. ``committed`` marks an ego that
    chose to clear a yellow light; it then holds at least its current speed.
    """
    accel = config.speed_gain * (v_ref - v) + config.integral_gain * integral
    if committed:
        accel = max(accel, 0.0)
    branch = "track"

    if lead is not None:
        candidate = gap_accel(v, lead[0], lead[1], config)
        if candidate < accel:
            accel, branch = candidate, "gap"

    if light is not None and not committed:
        candidate = stop_accel(v, light, config)
        if candidate is not None and candidate < accel:
            accel, branch = candidate, "stop"
            if light.distance_m - config.stop_line_tolerance_m <= 0:
                branch = "hold"

    accel = max(accel, -config.emergency_decel)
    lo, hi = wheel_torque_bounds(v, powertrain, vehicle)
    torque = float(np.clip(torque_for_accel(accel, v, grade, vehicle), float(lo), float(hi)))
    return AccCommand(torque=torque, accel=accel, branch=branch)


class AccController:
    """Owns the integral term and the yellow-light commitment of one control loop."""

    def __init__(self, config: AccConfig, vehicle: VehicleParams, powertrain: PowertrainParams):
        self.config = config
        self.vehicle = vehicle
        self.powertrain = powertrain
        self.integral = 0.0
        self._committed_to: Optional[int] = None

    def reset(self) -> None:
        self.integral = 0.0
        self._committed_to = None

    def step(
        self,
        v_ref: float,
        v: float,
        dt: float,
        lead: Optional[Tuple[float, float]] = None,
        light: Optional[LightAhead] = None,
        grade: float = 0.0,
    ) -> AccCommand:
        config = self.config
        if light is None or self._committed_to != light.index:
            self._committed_to = None
        if light is not None and light.phase is Phase.YELLOW and self._committed_to is None:
            if stop_accel(v, light, config) is None and light.distance_m > config.stop_line_tolerance_m:
                self._committed_to = light.index

        command = acc_command(
            v_ref, v, lead, light, config, self.vehicle, self.powertrain, grade, self.integral, self._committed_to is not None
        )
        if command.branch == "track":
            self.integral = float(np.clip(self.integral + (v_ref - v) * dt, -config.integral_limit, config.integral_limit))
        return command


def safety_monitor(
    time_s: float,
    v: float,
    accel: float,
    gap: Optional[float],
    lead_speed: Optional[float],
    red_crossings: Sequence[int],
    acc: AccConfig,
    monitor: MonitorConfig,
) -> List[Violation]:
    violations = []
    if gap is not None and lead_speed is not None and v > _MOVING and lead_speed > _MOVING and gap < acc.min_gap_m:
        violations.append(Violation(time_s, "gap", f"gap {gap:.2f} m below {acc.min_gap_m:.2f} m"))
    for n in red_crossings:
        violations.append(Violation(time_s, "red-light", f"entered intersection {n} on red"))
    if not monitor.accel_min <= accel <= monitor.accel_max:
        violations.append(Violation(time_s, "accel", f"acceleration {accel:.2f} m/s² outside bounds"))
    return violations
