"""Pre-transmission parallel PHEV component models and the ECMS torque split.

The motor sits before the gearbox together with the engine (through the
clutch), so both machines spin at the shaft speed ``v * r_gb / R_w``. All
kernels are vectorised over numpy arrays; the scalar operations are thin
wrappers so that the cost map and a fresh ``ecms_split`` share one code path.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ecoacc.config import BatteryParams, EngineMap, HsgMap, MotorMap, PowertrainParams, VehicleParams
from ecoacc.errors import InfeasibleDemand, PowerEnvelopeExceeded, TorqueOutOfRange

_TORQUE_TOL = 1e-9


@dataclass(frozen=True)
class TorqueSplit:
    motor_torque: float
    engine_torque: float
    engine_on: bool
    brake_torque: float

    def wheel_torque(self, gear_ratio: float, clutch_efficiency: float) -> float:
        engine = clutch_efficiency * self.engine_torque if self.engine_on else 0.0
        return gear_ratio * (self.motor_torque + engine) - self.brake_torque


def gear_ratio(v, params: PowertrainParams):
    speeds = np.array([g[0] for g in params.gears])
    ratios = np.array([g[1] for g in params.gears])
    idx = np.searchsorted(speeds, np.asarray(v, dtype=float), side="right") - 1
    return ratios[np.clip(idx, 0, len(ratios) - 1)]


def shaft_speed(v, params: PowertrainParams, vehicle: VehicleParams):
    return np.asarray(v, dtype=float) * gear_ratio(v, params) / vehicle.wheel_radius


def motor_torque_limits(omega, motor: MotorMap) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(regen limit <= 0, motoring limit >= 0)`` at shaft speed ``omega``."""
    omega = np.asarray(omega, dtype=float)
    safe = np.where(omega > 0, omega, 1.0)
    t_max = np.where(omega > 0, np.minimum(motor.peak_torque, motor.peak_power / safe), motor.peak_torque)
    t_regen = np.where(
        omega > 0,
        np.minimum(motor.regen_peak_torque, motor.regen_peak_power / safe),
        motor.regen_peak_torque,
    )
    return -t_regen, t_max


def engine_torque_limit(omega, engine: EngineMap) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    available = (omega >= engine.idle_speed) & (omega <= engine.max_speed)
    safe = np.where(omega > 0, omega, 1.0)
    return np.where(available, np.minimum(engine.peak_torque, engine.peak_power / safe), 0.0)


def motor_efficiency(torque, omega, motor: MotorMap):
    mech = np.abs(np.asarray(torque, dtype=float) * omega)
    losses = motor.copper_loss * torque * torque + motor.iron_loss * np.abs(omega)
    total = mech + losses
    raw = np.where(total > 0, motor.peak_efficiency * mech / np.where(total > 0, total, 1.0), motor.peak_efficiency)
    return np.maximum(raw, motor.min_efficiency)


def _machine_power(torque, omega, efficiency):
    # Efficiency always acts in the energy-losing direction.
    mech = torque * omega
    return np.where(mech >= 0, mech / efficiency, mech * efficiency)


def _motor_power(torque, omega, motor: MotorMap):
    return _machine_power(torque, omega, motor_efficiency(torque, omega, motor))


def motor_power(t_m: float, v: float, params: PowertrainParams, vehicle: VehicleParams) -> float:
    omega = float(shaft_speed(v, params, vehicle))
    t_min, t_max = motor_torque_limits(omega, params.motor)
    if t_m < float(t_min) - _TORQUE_TOL or t_m > float(t_max) + _TORQUE_TOL:
        raise TorqueOutOfRange(f"motor torque {t_m:.2f} N·m outside [{float(t_min):.2f}, {float(t_max):.2f}] at {v:.2f} m/s")
    return float(_motor_power(t_m, omega, params.motor))


def hsg_power(t_hsg, omega, hsg: HsgMap):
    return _machine_power(np.asarray(t_hsg, dtype=float), omega, hsg.efficiency)


def fuel_power(t_e, omega, engine: EngineMap):
    """Willans line: indicated power over a constant indicated efficiency."""
    t_e = np.asarray(t_e, dtype=float)
    return ((t_e + engine.friction_torque) * omega + engine.idle_power) / engine.indicated_efficiency


def open_circuit_voltage(soc, battery: BatteryParams):
    return np.interp(soc, battery.soc_points, battery.voc_points)


def equivalence_factor(soc, params: PowertrainParams):
    return np.interp(soc, params.equivalence_soc, params.equivalence_factor)


def _battery_current(p_b, voc, resistance):
    disc = voc * voc - 4.0 * resistance * p_b
    root = np.sqrt(np.maximum(disc, 0.0))
    # Rationalised root of V*I - R*I^2 = P; exact zero at P = 0.
    return np.where(disc >= 0, 2.0 * p_b / (voc + root), np.nan), disc


def battery_step(p_b: float, soc: float, params: PowertrainParams, dt: float) -> Tuple[float, float, float]:
    """Advance SOC under terminal power ``p_b`` for ``dt`` seconds.

    Returns ``(soc_next, p_elec, current)``. Positive power discharges.
    """
    battery = params.battery
    voc = float(open_circuit_voltage(soc, battery))
    current, disc = _battery_current(p_b, voc, battery.internal_resistance)
    if disc < 0:
        raise PowerEnvelopeExceeded(f"battery power {p_b:.0f} W exceeds the envelope at SOC {soc:.3f}")
    current = float(current)
    return soc - current * dt / battery.capacity, voc * current, current


def wheel_torque_bounds(v, params: PowertrainParams, vehicle: VehicleParams) -> Tuple[np.ndarray, np.ndarray]:
    ratio = gear_ratio(v, params)
    omega = np.asarray(v, dtype=float) * ratio / vehicle.wheel_radius
    t_regen, t_motor = motor_torque_limits(omega, params.motor)
    t_engine = engine_torque_limit(omega, params.engine)
    upper = ratio * (t_motor + params.clutch_efficiency * t_engine)
    lower = ratio * t_regen - params.friction_brake_torque
    return lower, upper


@dataclass(frozen=True)
class SplitTable:
    """Best split per query cell; ``cost`` is +inf where nothing is admissible."""

    cost: np.ndarray
    motor_torque: np.ndarray
    engine_torque: np.ndarray
    engine_on: np.ndarray
    brake_torque: np.ndarray
    fuel_power: np.ndarray
    elec_power: np.ndarray


def split_table(v, t_w, soc: float, params: PowertrainParams, vehicle: VehicleParams) -> SplitTable:
    """Minimise ``P_f + s(SOC) * P_elec`` over the candidate splits of every (v, T_w) cell.

    Candidate 0 keeps the engine off and regenerates as much as the motor
    allows, topping up with the friction brake. Candidates 1..n close the
    clutch and sweep the motor torque evenly between its regen and motoring
    limits, leaving the engine to make up the shaft demand.
    """
    v, t_w = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(t_w, dtype=float))
    ratio = gear_ratio(v, params)
    omega = v * ratio / vehicle.wheel_radius
    t_shaft = t_w / ratio
    t_regen, t_motor = motor_torque_limits(omega, params.motor)
    t_engine_max = engine_torque_limit(omega, params.engine)
    eta_c = params.clutch_efficiency

    fractions = np.linspace(0.0, 1.0, params.split_candidates)
    on_motor = t_regen[..., None] + fractions * (t_motor - t_regen)[..., None]
    off_motor = np.maximum(t_shaft, t_regen)[..., None]
    motor = np.concatenate([off_motor, on_motor], axis=-1)

    on_engine = (t_shaft[..., None] - on_motor) / eta_c
    engine = np.concatenate([np.zeros_like(off_motor), np.maximum(on_engine, 0.0)], axis=-1)
    engine_on = np.zeros(motor.shape, dtype=bool)
    engine_on[..., 1:] = True

    brake = np.zeros(motor.shape)
    brake[..., 0] = ratio * off_motor[..., 0] - t_w

    admissible = np.empty(motor.shape, dtype=bool)
    admissible[..., 0] = (t_shaft <= t_motor + _TORQUE_TOL) & (brake[..., 0] <= params.friction_brake_torque + _TORQUE_TOL)
    admissible[..., 1:] = (
        (t_engine_max[..., None] > 0)
        & (on_engine >= -_TORQUE_TOL)
        & (on_engine <= t_engine_max[..., None] * (1.0 + 1e-12) + _TORQUE_TOL)
    )

    omega_c = omega[..., None]
    p_b = _motor_power(motor, omega_c, params.motor) + hsg_power(0.0, omega_c, params.hsg) + params.aux_power
    voc = open_circuit_voltage(soc, params.battery)
    current, disc = _battery_current(p_b, voc, params.battery.internal_resistance)
    admissible &= disc >= 0
    p_elec = voc * np.where(admissible, current, 0.0)
    p_fuel = np.where(engine_on, fuel_power(engine, omega_c, params.engine), 0.0)

    cost = np.where(admissible, p_fuel + equivalence_factor(soc, params) * p_elec, np.inf)
    # lexsort: last key is primary
    order = np.lexsort((motor, np.abs(engine), cost), axis=-1)
    best = order[..., :1]

    def pick(values):
        return np.take_along_axis(values, best, axis=-1)[..., 0]

    return SplitTable(
        cost=pick(cost),
        motor_torque=pick(motor),
        engine_torque=pick(engine),
        engine_on=pick(engine_on),
        brake_torque=pick(brake),
        fuel_power=pick(p_fuel),
        elec_power=pick(p_elec),
    )


def ecms_split(v: float, t_w: float, soc: float, params: PowertrainParams, vehicle: VehicleParams) -> Tuple[TorqueSplit, float]:
    table = split_table(np.array([v]), np.array([t_w]), soc, params, vehicle)
    cost = float(table.cost[0])
    if not np.isfinite(cost):
        raise InfeasibleDemand(f"no admissible split for T_w={t_w:.1f} N·m at v={v:.2f} m/s, SOC={soc:.3f}")
    split = TorqueSplit(
        motor_torque=float(table.motor_torque[0]),
        engine_torque=float(table.engine_torque[0]),
        engine_on=bool(table.engine_on[0]),
        brake_torque=float(table.brake_torque[0]),
    )
    return split, cost


def terminal_power(split: TorqueSplit, v: float, params: PowertrainParams, vehicle: VehicleParams) -> float:
    """Battery terminal power ``P_m + P_HSG + P_aux`` for a realised split."""
    omega = float(shaft_speed(v, params, vehicle))
    return float(_motor_power(split.motor_torque, omega, params.motor) + hsg_power(0.0, omega, params.hsg)) + params.aux_power


def split_fuel_power(split: TorqueSplit, v: float, params: PowertrainParams, vehicle: VehicleParams) -> float:
    if not split.engine_on:
        return 0.0
    omega = float(shaft_speed(v, params, vehicle))
    return float(fuel_power(split.engine_torque, omega, params.engine))
