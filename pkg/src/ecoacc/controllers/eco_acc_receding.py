import logging

from ecoacc.core.planner import solve_dp
from ecoacc.core.signals import mean_signals
from ecoacc.core.vehicle import State, route_speed_floor
from ecoacc.plugins.interface import ControllerPlugin, PolicyReference, ReferenceSource, Snapshot

logger = logging.getLogger(__name__)


class EcoAccRecedingController(ControllerPlugin):
    """Re-solves the horizon DP at every replan epoch.

    The next light is planned from its live SPaT; downstream lights use the
    corridor's nominal cycle and offset with a historical red estimate.
    """

    @property
    def name(self) -> str:
        return "ECO-ACC (receding horizon)"

    @property
    def description(self) -> str:
        return "Receding-horizon DP over live and historical SPaT with scenario-averaged terminal cost."

    def setup(self, artifacts, scenario) -> None:
        self.artifacts = artifacts
        self.context = artifacts.planning_context(mean_signals(artifacts.config.route))

    def plan(self, snapshot: Snapshot) -> ReferenceSource:
        context = self.context
        route = context.route
        state = State(route_speed_floor(context.vehicle, snapshot.v), snapshot.time_s)
        horizon_end = min(route.step_of(snapshot.position_m) + context.horizon_steps, route.n_steps)
        terminal = self.artifacts.terminal.table(horizon_end)
        soc = context.cost_map.clamp_soc(snapshot.soc)
        policy = solve_dp(state, snapshot.position_m, snapshot.live, terminal, soc, context)
        logger.debug("Replan at %.0f m took %.2f s", snapshot.position_m, policy.solve_time_s)
        return PolicyReference(policy)
