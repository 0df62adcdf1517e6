class EcoAccError(Exception):
    """Base class for every error raised by ecoacc."""


class ConfigError(EcoAccError):
    pass


class NonPositiveNextSpeed(EcoAccError):
    """Spatial transition whose successor speed falls to or below the speed floor."""


class TorqueOutOfRange(EcoAccError):
    pass


class PowerEnvelopeExceeded(EcoAccError):
    """Battery power demand beyond what the open-circuit voltage can deliver."""


class InfeasibleDemand(EcoAccError):
    """No admissible torque split reproduces the demanded wheel torque."""


class OutOfHull(EcoAccError):
    pass


class EmptyHistory(EcoAccError):
    pass


class NoFeasiblePath(EcoAccError):
    pass


class StalePolicyBeyondHorizon(EcoAccError):
    pass


class SimulationTimeout(EcoAccError):
    pass


class ZeroEnergy(EcoAccError):
    pass
