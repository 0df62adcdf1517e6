from typing import Optional

from ecoacc.core.planner import solve_dp
from ecoacc.core.terminal import ArrivalSlack
from ecoacc.core.vehicle import State, route_speed_floor
from ecoacc.plugins.interface import ControllerPlugin, PolicyReference, ReferenceSource, Snapshot


class EcoAccGlobalController(ControllerPlugin):
    """Single departure solve over the whole corridor with the realised signal timings known."""

    @property
    def name(self) -> str:
        return "ECO-ACC (global horizon)"

    @property
    def description(self) -> str:
        return "One corridor-length DP solve with perfect SPaT knowledge; an information upper bound."

    def replan_period(self, artifacts) -> Optional[float]:
        return None

    def setup(self, artifacts, scenario) -> None:
        reds = tuple(spec.red_s for spec in scenario.signals)
        self.context = artifacts.planning_context(scenario.signals, reds)

    def plan(self, snapshot: Snapshot) -> ReferenceSource:
        context = self.context
        state = State(route_speed_floor(context.vehicle, snapshot.v), snapshot.time_s)
        remaining = context.route.length_m - snapshot.position_m
        soc = context.cost_map.clamp_soc(snapshot.soc)
        policy = solve_dp(state, snapshot.position_m, None, ArrivalSlack(context), soc, context, horizon_m=remaining)
        return PolicyReference(policy)
