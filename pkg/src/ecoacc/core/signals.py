"""Signal phase and timing: ground truth, live snapshots, history and scenarios.

Every cycle clock starts with red: red occupies ``[0, red)``, green
``[red, cycle - yellow)`` and yellow the tail ``[cycle - yellow, cycle)``.
For planning, yellow is a no-pass phase just like red.
"""
import json
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import truncnorm

from ecoacc.config import Distribution, HistoryConfig, IntersectionConfig, RouteConfig, TrafficConfig
from ecoacc.errors import ConfigError, EmptyHistory


class Phase(str, Enum):
    RED = "red"
    GREEN = "green"
    YELLOW = "yellow"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SignalTimingSpec(_Frozen):
    name: str = ""
    cycle_s: float = Field(..., gt=0)
    red_s: float = Field(..., gt=0)
    yellow_s: float = Field(0.0, ge=0)
    offset_s: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "SignalTimingSpec":
        if self.red_s + self.yellow_s > self.cycle_s:
            raise ValueError(f"{self.name}: red + yellow exceeds the cycle")
        if self.offset_s >= self.cycle_s:
            raise ValueError(f"{self.name}: offset must lie in [0, cycle)")
        return self

    @property
    def green_s(self) -> float:
        return self.cycle_s - self.red_s - self.yellow_s


class LiveSpat(_Frozen):
    intersection: int = Field(..., ge=0)
    phase: Phase
    remaining_s: float = Field(..., ge=0)
    timestamp_s: float = 0.0


class HistoricalSpat(_Frozen):
    red_samples: Tuple[Tuple[float, ...], ...]
    cycle_s: Tuple[float, ...]
    percentile: float = Field(90.0, ge=0, le=100)
    hour: Optional[int] = Field(None, ge=0, le=23)

    @model_validator(mode="after")
    def _check(self) -> "HistoricalSpat":
        if len(self.red_samples) != len(self.cycle_s):
            raise ValueError("one sample set per intersection is required")
        for samples, cycle in zip(self.red_samples, self.cycle_s):
            if any(s < 0 or s >= cycle for s in samples):
                raise ValueError("red samples must lie in [0, cycle)")
        return self


class LeadSpawn(_Frozen):
    entry_time_s: float
    entry_speed: float = Field(..., ge=0)
    desired_speed: float = Field(..., gt=0)
    time_headway_s: float = Field(..., gt=0)


class Scenario(_Frozen):
    scenario_id: int
    signals: Tuple[SignalTimingSpec, ...]
    leads: Tuple[LeadSpawn, ...] = ()


def cycle_clock(t_arr, offset, cycle):
    clock = np.mod(np.asarray(t_arr, dtype=float) + offset, cycle)
    return np.where(clock >= cycle, clock - cycle, clock)


def phase_at(spec: SignalTimingSpec, t: float) -> Phase:
    clock = float(cycle_clock(t, spec.offset_s, spec.cycle_s))
    if clock < spec.red_s:
        return Phase.RED
    if clock < spec.cycle_s - spec.yellow_s:
        return Phase.GREEN
    return Phase.YELLOW


def live_spat(spec: SignalTimingSpec, t: float, intersection: int) -> LiveSpat:
    clock = float(cycle_clock(t, spec.offset_s, spec.cycle_s))
    phase = phase_at(spec, t)
    if phase is Phase.RED:
        remaining = spec.red_s - clock
    elif phase is Phase.GREEN:
        remaining = spec.cycle_s - spec.yellow_s - clock
    else:
        remaining = spec.cycle_s - clock
    return LiveSpat(intersection=intersection, phase=phase, remaining_s=max(remaining, 0.0), timestamp_s=t)


def infeasible_downstream(f_t, spec: SignalTimingSpec, red_est: float):
    """Arrival at absolute time ``f_t`` falls in the estimated red or the yellow before it."""
    clock = cycle_clock(f_t, spec.offset_s + spec.yellow_s, spec.cycle_s)
    return clock <= red_est + spec.yellow_s


def infeasible_first(f_t, live: LiveSpat, spec: SignalTimingSpec, red_est: float):
    """Arrival ``f_t`` seconds after the snapshot conflicts with the next light.

    ``live.remaining_s`` is measured from the snapshot, so the clock
    ``R(f_t - s_t, cycle)`` restarts at the end of the current phase.
    """
    f_t = np.asarray(f_t, dtype=float)
    s_t = live.remaining_s
    cycle = spec.cycle_s
    after = f_t > s_t
    clock = cycle_clock(f_t - s_t, 0.0, cycle)

    if live.phase is Phase.RED:
        return ~after | (after & (clock >= cycle - red_est - spec.yellow_s))
    if live.phase is Phase.GREEN:
        return after & (clock <= red_est + spec.yellow_s)
    return ~after | (after & ((clock <= red_est) | (clock >= cycle - spec.yellow_s)))


def estimate_red(hist: HistoricalSpat, intersection: int, eta: Optional[float] = None) -> float:
    samples = hist.red_samples[intersection]
    if not samples:
        raise EmptyHistory(f"no red-duration history for intersection {intersection}")
    level = hist.percentile if eta is None else eta
    return float(np.percentile(np.asarray(samples, dtype=float), level, method="linear"))


def truncated_normal(rng: np.random.Generator, mean: float, std: float, low: float, high: float, size=None):
    if std == 0:
        return mean if size is None else np.full(size, float(mean))
    a, b = (low - mean) / std, (high - mean) / std
    draw = truncnorm.rvs(a, b, loc=mean, scale=std, size=size, random_state=rng)
    return float(draw) if size is None else np.asarray(draw)


def _draw(rng: np.random.Generator, dist: Distribution, deterministic: bool) -> float:
    return truncated_normal(rng, dist.mean, 0.0 if deterministic else dist.std, dist.low, dist.high)


def mean_signals(route: RouteConfig) -> Tuple[SignalTimingSpec, ...]:
    return tuple(_timing(i, i.red_mean_s, i.offset_mean_s) for i in route.intersections)


def _timing(intersection: IntersectionConfig, red: float, offset: float) -> SignalTimingSpec:
    return SignalTimingSpec(
        name=intersection.name,
        cycle_s=intersection.cycle_s,
        red_s=red,
        yellow_s=intersection.yellow_s,
        offset_s=float(offset) % intersection.cycle_s,
    )


def sample_scenario(
    route: RouteConfig,
    traffic: TrafficConfig,
    seed: int,
    deterministic: bool = False,
) -> Scenario:
    """Draw realised signal timings and a lead-vehicle schedule for one episode.

    Leads enter the corridor at position 0 before the ego vehicle (negative
    entry times), spaced at least ``min_entry_gap_s`` apart, so they are
    spread ahead of it when the episode starts.
    """
    rng = np.random.default_rng(seed)
    signals = []
    for intersection in route.intersections:
        red_std = 0.0 if deterministic else intersection.red_std_s
        offset_std = 0.0 if deterministic else intersection.offset_std_s
        red = truncated_normal(rng, intersection.red_mean_s, red_std, intersection.red_min_s, intersection.red_max_s)
        offset = truncated_normal(rng, intersection.offset_mean_s, offset_std, 0.0, intersection.cycle_s)
        signals.append(_timing(intersection, red, offset))

    count = min(int(rng.poisson(traffic.mean_leads)), traffic.max_leads)
    lags = np.sort(rng.uniform(traffic.min_entry_gap_s, traffic.entry_window_s, size=count))
    for i in range(1, count):
        lags[i] = max(lags[i], lags[i - 1] + traffic.min_entry_gap_s)

    leads = [
        LeadSpawn(
            entry_time_s=-float(lag),
            entry_speed=_draw(rng, traffic.entry_speed, deterministic),
            desired_speed=_draw(rng, traffic.desired_speed, deterministic),
            time_headway_s=_draw(rng, traffic.time_headway, deterministic),
        )
        for lag in lags[::-1]
    ]
    return Scenario(scenario_id=seed, signals=tuple(signals), leads=tuple(leads))


def generate_history(route: RouteConfig, config: HistoryConfig, seed: Optional[int] = None) -> HistoricalSpat:
    """Synthetic red-duration history; each hour-of-day key gets its own sample stream."""
    base = config.seed if seed is None else seed
    entropy = [base] if config.hour is None else [base, config.hour]
    rng = np.random.default_rng(entropy)
    samples = tuple(
        tuple(
            float(s)
            for s in truncated_normal(rng, i.red_mean_s, i.red_std_s, i.red_min_s, i.red_max_s, size=config.samples)
        )
        for i in route.intersections
    )
    return HistoricalSpat(
        red_samples=samples,
        cycle_s=tuple(i.cycle_s for i in route.intersections),
        percentile=config.percentile,
        hour=config.hour,
    )


def red_estimates(hist: HistoricalSpat) -> Tuple[float, ...]:
    return tuple(estimate_red(hist, n) for n in range(len(hist.red_samples)))


def save_scenario(scenario: Scenario, path: Path) -> None:
    Path(path).write_text(scenario.model_dump_json(indent=2), encoding="utf-8")


def load_scenario(path: Path) -> Scenario:
    try:
        return Scenario.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot load scenario {path}: {e}") from e


def load_live_spat(path: Path) -> LiveSpat:
    try:
        return LiveSpat.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot load SPaT snapshot {path}: {e}") from e


def phases(specs: Sequence[SignalTimingSpec], t: float) -> Tuple[Phase, ...]:
    return tuple(phase_at(spec, t) for spec in specs)
