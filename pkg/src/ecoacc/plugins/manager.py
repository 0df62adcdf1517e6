import importlib
import logging
import pkgutil
from typing import Dict, Optional, Type

from ecoacc.plugins.interface import ControllerPlugin

logger = logging.getLogger(__name__)


class PluginManager:
    def __init__(self, plugin_dir: str = "ecoacc.controllers"):
        self.plugin_dir = plugin_dir
        self.plugins: Dict[str, Type[ControllerPlugin]] = {}

    def discover_plugins(self) -> Dict[str, Type[ControllerPlugin]]:
        plugin_package = importlib.import_module(self.plugin_dir)
        plugins = self._find_plugin_classes(plugin_package)
        self.plugins = plugins
        return plugins

    def _find_plugin_classes(self, package) -> Dict[str, Type[ControllerPlugin]]:
        plugins = {}
        for _, name, is_pkg in pkgutil.iter_modules(package.__path__, f"{self.plugin_dir}."):
            if not is_pkg:
                module = importlib.import_module(name)
                plugins.update(self._get_plugin_classes(module))
        return plugins

    def _get_plugin_classes(self, module) -> Dict[str, Type[ControllerPlugin]]:
        plugin_classes = {}
        for attr_name in dir(module):
            attr = getattr(module, attr_name)
            if (
                isinstance(attr, type)
                and issubclass(attr, ControllerPlugin)
                and attr is not ControllerPlugin
                and attr.__module__ == module.__name__
            ):
                plugin_id = module.__name__.split(".")[-1].replace("_", "-")
                plugin_classes[plugin_id] = attr
        return plugin_classes

    def _initialize_plugin(self, plugin_id: str) -> Optional[ControllerPlugin]:
        plugin_class = self.plugins.get(plugin_id)
        if plugin_class:
            try:
                return plugin_class()
            except Exception as e:
                logger.error("Failed to initialize controller %s: %s", plugin_id, e)
        else:
            logger.error("Unknown controller %s; available: %s", plugin_id, ", ".join(sorted(self.plugins)))
        return None

    def create(self, plugin_id: str) -> Optional[ControllerPlugin]:
        """Fresh controller instance; episodes never share one."""
        if not self.plugins:
            self.discover_plugins()
        return self._initialize_plugin(plugin_id)
