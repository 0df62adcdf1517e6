"""Validated configuration for the ECO-ACC corridor simulator.

Every section is a frozen pydantic model with defaults, so a partial JSON file
overrides only the fields it names. The shipped defaults live in
``ecoacc/data/default_config.json`` and mirror the values declared here.
"""
import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ecoacc.errors import ConfigError

DEFAULT_CONFIG_PATH = Path(__file__).parent / "data" / "default_config.json"

ControllerMode = Literal["eco-acc-receding", "eco-acc-global", "acc-only"]
EnergyCost = Literal["power-map", "wheel-energy"]


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class VehicleParams(_Section):
    mass: float = Field(1800.0, gt=0)
    wheel_radius: float = Field(0.32, gt=0)
    gravity: float = Field(9.81, gt=0)
    air_density: float = Field(1.2, gt=0)
    frontal_area: float = Field(2.25, gt=0)
    rolling_resistance: float = Field(0.009, gt=0)
    drag_coefficient: float = Field(0.31, gt=0)
    accel_min: float = Field(-3.0, lt=0)
    accel_max: float = Field(2.5, gt=0)
    speed_floor: float = Field(0.5, gt=0)


class MotorMap(_Section):
    """Quadratic-loss surrogate of the traction motor efficiency map."""

    peak_torque: float = Field(170.0, gt=0)
    peak_power: float = Field(45000.0, gt=0)
    regen_peak_torque: float = Field(170.0, gt=0)
    regen_peak_power: float = Field(45000.0, gt=0)
    peak_efficiency: float = Field(0.94, gt=0, le=1)
    min_efficiency: float = Field(0.5, gt=0, le=1)
    copper_loss: float = Field(0.02, ge=0)
    iron_loss: float = Field(1.5, ge=0)


class EngineMap(_Section):
    """Willans-line surrogate of the engine fuel map."""

    peak_torque: float = Field(147.0, gt=0)
    peak_power: float = Field(78000.0, gt=0)
    idle_speed: float = Field(90.0, gt=0)
    max_speed: float = Field(650.0, gt=0)
    indicated_efficiency: float = Field(0.36, gt=0, le=1)
    friction_torque: float = Field(25.0, ge=0)
    idle_power: float = Field(3000.0, ge=0)


class HsgMap(_Section):
    efficiency: float = Field(0.9, gt=0, le=1)


class BatteryParams(_Section):
    soc_points: Tuple[float, ...] = (0.0, 0.5, 1.0)
    voc_points: Tuple[float, ...] = (330.0, 355.0, 375.0)
    internal_resistance: float = Field(0.1, gt=0)
    capacity: float = Field(90000.0, gt=0)

    @model_validator(mode="after")
    def _check_voc(self) -> "BatteryParams":
        if len(self.soc_points) != len(self.voc_points) or len(self.soc_points) < 2:
            raise ValueError("soc_points and voc_points must have the same length (>= 2)")
        if any(b <= a for a, b in zip(self.soc_points, self.soc_points[1:])):
            raise ValueError("soc_points must be strictly increasing")
        if min(self.voc_points) <= 0:
            raise ValueError("open-circuit voltage must be positive")
        return self


class PowertrainParams(_Section):
    # (minimum vehicle speed m/s, overall ratio incl. final drive), ascending speeds
    gears: Tuple[Tuple[float, float], ...] = (
        (0.0, 12.0),
        (6.0, 8.0),
        (11.0, 5.6),
        (16.0, 4.4),
        (22.0, 3.6),
        (28.0, 3.0),
    )
    clutch_efficiency: float = Field(0.97, gt=0, le=1)
    motor: MotorMap = MotorMap()
    engine: EngineMap = EngineMap()
    hsg: HsgMap = HsgMap()
    battery: BatteryParams = BatteryParams()
    aux_power: float = Field(250.0, ge=0)
    friction_brake_torque: float = Field(3500.0, gt=0)
    equivalence_soc: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    equivalence_factor: Tuple[float, ...] = (3.4, 3.0, 2.6, 2.0, 1.2, 1.0)
    split_candidates: int = Field(101, ge=2)

    @model_validator(mode="after")
    def _check_tables(self) -> "PowertrainParams":
        speeds = [g[0] for g in self.gears]
        if not speeds or speeds[0] != 0.0 or any(b <= a for a, b in zip(speeds, speeds[1:])):
            raise ValueError("gear table must start at 0 m/s with ascending speeds")
        if any(g[1] <= 0 for g in self.gears):
            raise ValueError("gear ratios must be positive")
        if len(self.equivalence_soc) != len(self.equivalence_factor):
            raise ValueError("equivalence_soc and equivalence_factor lengths differ")
        return self


class CostMapGrid(_Section):
    speed_min: float = Field(0.0, ge=0)
    speed_max: float = Field(20.0, gt=0)
    speed_points: int = Field(41, ge=2)
    torque_min: float = -2000.0
    torque_max: float = 2000.0
    torque_points: int = Field(101, ge=2)
    soc_min: float = Field(0.10, ge=0, le=1)
    soc_max: float = Field(1.00, ge=0, le=1)
    soc_step: float = Field(0.01, gt=0)

    @model_validator(mode="after")
    def _check_hull(self) -> "CostMapGrid":
        if self.speed_max <= self.speed_min or self.torque_max <= self.torque_min:
            raise ValueError("grid bounds must be increasing")
        if self.soc_max < self.soc_min:
            raise ValueError("soc_max must not be below soc_min")
        return self


class IntersectionConfig(_Section):
    name: str = ""
    position_m: float = Field(..., ge=0)
    cycle_s: float = Field(..., gt=0)
    red_mean_s: float = Field(..., gt=0)
    red_std_s: float = Field(0.0, ge=0)
    red_min_s: float = Field(..., gt=0)
    red_max_s: float = Field(..., gt=0)
    yellow_s: float = Field(3.0, ge=0)
    offset_mean_s: float = Field(0.0, ge=0)
    offset_std_s: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _check_timing(self) -> "IntersectionConfig":
        if not self.red_min_s <= self.red_mean_s <= self.red_max_s:
            raise ValueError(f"{self.name or self.position_m}: red mean outside [red_min, red_max]")
        if self.red_max_s + self.yellow_s >= self.cycle_s:
            raise ValueError(f"{self.name or self.position_m}: red + yellow must leave a green band")
        if self.offset_mean_s >= self.cycle_s:
            raise ValueError(f"{self.name or self.position_m}: offset must lie in [0, cycle)")
        return self


class RouteConfig(_Section):
    length_m: float = Field(2500.0, gt=0)
    step_m: float = Field(10.0, gt=0)
    speed_limit_mps: float = Field(15.6, gt=0)
    grade_rad: float = 0.0
    grade_csv: Optional[Path] = None
    speed_limit_csv: Optional[Path] = None
    intersections: Tuple[IntersectionConfig, ...] = ()

    @model_validator(mode="after")
    def _check_route(self) -> "RouteConfig":
        positions = [i.position_m for i in self.intersections]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("intersection positions must be strictly increasing")
        if positions and positions[-1] > self.length_m:
            raise ValueError("intersections must lie within the route")
        return self


class HistoryConfig(_Section):
    samples: int = Field(720, ge=1)
    percentile: float = Field(90.0, ge=0, le=100)
    seed: int = 20180604
    hour: Optional[int] = Field(None, ge=0, le=23)


class Distribution(_Section):
    """Truncated normal; std 0 collapses to the mean."""

    mean: float
    std: float = Field(0.0, ge=0)
    low: float
    high: float

    @model_validator(mode="after")
    def _check_support(self) -> "Distribution":
        if not self.low <= self.mean <= self.high:
            raise ValueError("distribution mean outside [low, high]")
        return self


class TrafficConfig(_Section):
    mean_leads: float = Field(2.0, ge=0)
    max_leads: int = Field(6, ge=0)
    entry_window_s: float = Field(90.0, gt=0)
    min_entry_gap_s: float = Field(3.0, gt=0)
    entry_speed: Distribution = Distribution(mean=12.0, std=2.0, low=6.0, high=15.6)
    desired_speed: Distribution = Distribution(mean=14.0, std=1.5, low=10.0, high=15.6)
    time_headway: Distribution = Distribution(mean=1.5, std=0.3, low=1.0, high=2.5)
    min_gap_m: float = Field(2.0, gt=0)
    max_accel: float = Field(1.5, gt=0)
    comfort_decel: float = Field(2.0, gt=0)
    max_decel: float = Field(8.0, gt=0)
    exponent: float = Field(4.0, gt=0)
    length_m: float = Field(4.5, gt=0)


class PlannerConfig(_Section):
    horizon_m: float = Field(400.0, gt=0)
    speed_points: int = Field(30, ge=2)
    time_points: int = Field(60, ge=2)
    torque_candidates: int = Field(101, ge=2)
    time_weight: float = Field(34000.0, ge=0)  # per metre: a step of ds costs ds * (g + time_weight / v)
    slack_weight: float = Field(2000.0, ge=0)
    desired_travel_time_s: float = Field(300.0, gt=0)
    average_speed_mps: float = Field(9.0, gt=0)
    terminal_scenarios: int = Field(8, ge=1)
    terminal_seed: int = 1234
    time_margin_s: float = Field(120.0, ge=0)
    time_band_s: float = Field(5.0, gt=0)
    energy_cost: EnergyCost = "power-map"


class AccConfig(_Section):
    speed_gain: float = Field(0.8, ge=0)
    integral_gain: float = Field(0.1, ge=0)
    integral_limit: float = Field(2.0, ge=0)
    min_gap_m: float = Field(2.0, gt=0)
    time_headway_s: float = Field(1.5, gt=0)
    gap_gain: float = Field(0.2, ge=0)
    relative_speed_gain: float = Field(0.6, ge=0)
    comfort_decel: float = Field(3.0, gt=0)
    emergency_decel: float = Field(6.0, gt=0)
    stop_activation_decel: float = Field(0.5, ge=0)
    stop_line_tolerance_m: float = Field(1.0, ge=0)


class MonitorConfig(_Section):
    accel_min: float = Field(-8.0, lt=0)
    accel_max: float = Field(4.0, gt=0)


class SimConfig(_Section):
    control_period_s: float = Field(0.2, gt=0)
    replan_period_s: float = Field(4.0, gt=0)
    planner_latency_s: float = Field(2.0, ge=0)
    measured_latency: bool = False
    mode: ControllerMode = "eco-acc-receding"
    initial_soc: float = Field(0.9, gt=0, le=1)
    initial_speed_mps: float = Field(10.0, ge=0)
    max_time_s: float = Field(900.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_rates(self) -> "SimConfig":
        if self.control_period_s > self.replan_period_s:
            raise ValueError("control period must not exceed the replan period")
        if self.planner_latency_s > self.replan_period_s:
            raise ValueError("planner latency must not exceed the replan period")
        return self


class EcoAccConfig(_Section):
    vehicle: VehicleParams = VehicleParams()
    powertrain: PowertrainParams = PowertrainParams()
    costmap: CostMapGrid = CostMapGrid()
    route: RouteConfig = RouteConfig()
    history: HistoryConfig = HistoryConfig()
    traffic: TrafficConfig = TrafficConfig()
    planner: PlannerConfig = PlannerConfig()
    acc: AccConfig = AccConfig()
    monitor: MonitorConfig = MonitorConfig()
    sim: SimConfig = SimConfig()


def load_config(path: Optional[Path] = None) -> EcoAccConfig:
    source = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {source}: {e}") from e

    try:
        config = EcoAccConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {source}:\n{e}") from e

    return _resolve_relative_paths(config, source.parent)


def _resolve_relative_paths(config: EcoAccConfig, base: Path) -> EcoAccConfig:
    route = config.route
    updates = {}
    for field in ("grade_csv", "speed_limit_csv"):
        value = getattr(route, field)
        if value is not None and not value.is_absolute():
            updates[field] = base / value
    if not updates:
        return config
    return config.model_copy(update={"route": route.model_copy(update=updates)})


def config_hash(*sections: BaseModel) -> str:
    payload = json.dumps([s.model_dump(mode="json") for s in sections], sort_keys=True)
    return hashlib.md5(payload.encode()).hexdigest()
