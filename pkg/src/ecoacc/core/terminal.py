"""Approximate cost-to-go beyond the receding horizon.

Each sampled SPaT scenario gets one backward pass over the corridor tail with
its realised signal timings treated as known. The terminal table at a step is
the mean of the finite scenario values; every pass starts from the soft
arrival-time slack at the destination, so each scenario is priced on its own
arrival time.

Tail passes open their time boxes at the corridor start (t = 0), so a pass
over the whole corridor yields the table of every step at once.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ecoacc.config import RouteConfig, TrafficConfig
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.grid import bilinear
from ecoacc.core.planner import PlanningContext, StageModel, horizon_slack
from ecoacc.core.signals import Scenario, sample_scenario

logger = logging.getLogger(__name__)

# part of the tail cache key; bump when tail values change meaning
TAIL_VERSION = "2"


class ArrivalSlack:
    """Terminal values at the destination: only the late-arrival penalty."""

    def __init__(self, context: PlanningContext):
        self.context = context

    def on_grid(self, v_grid: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
        slack = horizon_slack(self.context.route.length_m, t_grid, self.context)
        return np.broadcast_to(slack[None, :], (len(v_grid), len(t_grid))).copy()


@dataclass(frozen=True)
class TerminalCostTable:
    step: int
    v_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray  # (n_v, n_t), +inf where every scenario is infeasible

    def on_grid(self, v_grid: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
        v, t = np.meshgrid(v_grid, t_grid, indexing="ij")
        return bilinear(self.v_grid, self.t_grid, self.values, v, np.clip(t, self.t_grid[0], self.t_grid[-1]))


def terminal_scenarios(route: RouteConfig, traffic: TrafficConfig, count: int, seed: int, deterministic: bool = False):
    return [sample_scenario(route, traffic, seed + j, deterministic=deterministic) for j in range(count)]


def finite_mean(stack: np.ndarray) -> np.ndarray:
    finite = np.isfinite(stack)
    count = finite.sum(axis=0)
    total = np.where(finite, stack, 0.0).sum(axis=0)
    return np.where(count > 0, total / np.maximum(count, 1), np.inf)


def _tail_model(context: PlanningContext, start: int, soc: float, scenario: Scenario) -> StageModel:
    reds = tuple(s.red_s for s in scenario.signals)
    return StageModel(context, start, context.route.n_steps, 0.0, soc, None, scenario.signals, reds, origin=0)


def _tail_values(model: StageModel) -> np.ndarray:
    _, values = model.backward(ArrivalSlack(model.context).on_grid(model.v_grid, model.t_grids[-1]))
    return values


def _table(context: PlanningContext, step: int, t_grid: np.ndarray, stack: np.ndarray) -> TerminalCostTable:
    return TerminalCostTable(step, context.v_grid, t_grid, finite_mean(stack))


def terminal_cost(position_m: float, soc: float, context: PlanningContext, scenarios: Sequence[Scenario]) -> TerminalCostTable:
    """Terminal table at the horizon end of an anchor at ``position_m``."""
    route = context.route
    step = min(route.step_of(position_m) + context.horizon_steps, route.n_steps)
    tails = []
    t_grid = None
    for scenario in scenarios:
        model = _tail_model(context, step, soc, scenario)
        tails.append(_tail_values(model)[0])
        t_grid = model.t_grids[0]
    return _table(context, step, t_grid, np.stack(tails))


class TerminalCostModel:
    """Whole-corridor tail values per scenario, computed once and sliced per step."""

    def __init__(
        self,
        context: PlanningContext,
        scenarios: Sequence[Scenario],
        soc: float,
        cache: Optional[ArtifactCache] = None,
        cache_key: Optional[str] = None,
    ):
        self.context = context
        self.soc = soc
        self.scenario_ids = [s.scenario_id for s in scenarios]
        self._scenarios = list(scenarios)
        self._cache = cache
        self._cache_key = cache_key
        self._values: Optional[np.ndarray] = None
        self._t_grids: Optional[np.ndarray] = None

    def _compute(self) -> None:
        cache, key = self._cache, self._cache_key
        if cache is not None and key is not None:
            cached = cache.load(key)
            if cached is not None:
                arrays, _ = cached
                self._values, self._t_grids = arrays["values"], arrays["t_grids"]
                logger.info("Using cached terminal tails %s", key[:8])
                return

        tails = []
        for scenario in self._scenarios:
            model = _tail_model(self.context, 0, self.soc, scenario)
            tails.append(_tail_values(model))
            self._t_grids = model.t_grids
        self._values = np.stack(tails)
        logger.info("Computed %d terminal tail passes over %d steps", len(tails), self.context.route.n_steps)

        if cache is not None and key is not None:
            metadata = {"scenarios": self.scenario_ids, "soc": self.soc}
            cache.save(key, {"values": self._values, "t_grids": self._t_grids}, metadata)

    def table(self, step: int) -> TerminalCostTable:
        if self._values is None:
            self._compute()
        step = min(step, self.context.route.n_steps)
        return _table(self.context, step, self._t_grids[step], self._values[:, step])
