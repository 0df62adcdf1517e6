from typing import Optional

from ecoacc.plugins.interface import ControllerPlugin, ReferenceSource, Snapshot, SpeedLimitReference


class AccOnlyController(ControllerPlugin):
    @property
    def name(self) -> str:
        return "ACC only"

    @property
    def description(self) -> str:
        return "Tracks the corridor speed limit through the safety layer; no planning."

    def replan_period(self, artifacts) -> Optional[float]:
        return None

    def setup(self, artifacts, scenario) -> None:
        self._reference = SpeedLimitReference(artifacts.route)

    def plan(self, snapshot: Snapshot) -> ReferenceSource:
        return self._reference
