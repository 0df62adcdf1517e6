from ecoacc.plugins.interface import ControllerPlugin, ReferenceSource, Snapshot
from ecoacc.plugins.manager import PluginManager

__all__ = ["ControllerPlugin", "PluginManager", "ReferenceSource", "Snapshot"]
