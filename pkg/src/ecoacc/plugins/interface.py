from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from ecoacc.core.planner import PolicyMap, query_policy
from ecoacc.core.signals import LiveSpat

if TYPE_CHECKING:
    from ecoacc.core.sim import EpisodeArtifacts
    from ecoacc.core.signals import Scenario


@dataclass(frozen=True)
class Snapshot:
    """Ego state captured at a replan epoch."""

    tick: int
    time_s: float
    position_m: float
    v: float
    soc: float
    live: Optional[LiveSpat]


class ReferenceSource(ABC):
    @abstractmethod
    def reference(self, position_m: float, v: float, t: float) -> float:
        """Velocity reference for the safety layer at the current ego state."""


class ConstantReference(ReferenceSource):
    def __init__(self, v_ref: float):
        self.v_ref = v_ref

    def reference(self, position_m: float, v: float, t: float) -> float:
        return self.v_ref


class SpeedLimitReference(ReferenceSource):
    def __init__(self, route):
        self.route = route

    def reference(self, position_m: float, v: float, t: float) -> float:
        return self.route.speed_limit_at(self.route.step_of(position_m))


class PolicyReference(ReferenceSource):
    def __init__(self, policy: PolicyMap):
        self.policy = policy

    def reference(self, position_m: float, v: float, t: float) -> float:
        _, v_ref = query_policy(self.policy, position_m, v, t)
        return v_ref


class ControllerPlugin(ABC):
    @property
    @abstractmethod
    def name(self) -> str:
        """
        Return the name of the controller.

        Returns:
            Human-readable name of the controller
        """
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        """
        Return a description of the controller.

        Returns:
            Human-readable description of the controller
        """
        pass

    def replan_period(self, artifacts: "EpisodeArtifacts") -> Optional[float]:
        """Seconds between replans, or None for a single plan at departure."""
        return artifacts.config.sim.replan_period_s

    @abstractmethod
    def setup(self, artifacts: "EpisodeArtifacts", scenario: "Scenario") -> None:
        """
        Prepare per-episode planning inputs.

        Args:
            artifacts: Shared corridor artifacts (route, cost map, history, terminal tails)
            scenario: The realised scenario the episode runs against
        """
        pass

    @abstractmethod
    def plan(self, snapshot: Snapshot) -> ReferenceSource:
        """
        Compute a velocity reference from a replan snapshot.

        Args:
            snapshot: Ego state and live SPaT at the replan epoch

        Returns:
            Reference source queried by the safety layer every control tick
        """
        pass
