import logging

import pytest

from ecoacc.config import (
    CostMapGrid,
    EcoAccConfig,
    HistoryConfig,
    IntersectionConfig,
    PlannerConfig,
    PowertrainParams,
    RouteConfig,
    SimConfig,
    TrafficConfig,
    load_config,
)
from ecoacc.core.cache import ArtifactCache
from ecoacc.core.costmap import build_cost_map, cached_cost_map
from ecoacc.core.sim import prepare_artifacts
from ecoacc.log import LOGGER_NAME


def corridor_config(**sections) -> EcoAccConfig:
    """A 300 m corridor with one signal at 150 m and coarse grids."""
    base = EcoAccConfig(
        powertrain=PowertrainParams(split_candidates=21),
        costmap=CostMapGrid(
            speed_min=0.0,
            speed_max=20.0,
            speed_points=21,
            torque_min=-2000.0,
            torque_max=2000.0,
            torque_points=41,
            soc_min=0.85,
            soc_max=0.95,
            soc_step=0.05,
        ),
        route=RouteConfig(
            length_m=300.0,
            step_m=25.0,
            speed_limit_mps=15.0,
            intersections=(
                IntersectionConfig(
                    name="Main St",
                    position_m=150.0,
                    cycle_s=60.0,
                    red_mean_s=25.0,
                    red_std_s=3.0,
                    red_min_s=18.0,
                    red_max_s=32.0,
                    yellow_s=3.0,
                    offset_mean_s=10.0,
                    offset_std_s=5.0,
                ),
            ),
        ),
        history=HistoryConfig(samples=100),
        traffic=TrafficConfig(mean_leads=1.0, max_leads=2, entry_window_s=30.0),
        planner=PlannerConfig(
            horizon_m=100.0,
            speed_points=8,
            time_points=12,
            torque_candidates=15,
            desired_travel_time_s=40.0,
            average_speed_mps=9.0,
            terminal_scenarios=2,
            time_margin_s=60.0,
        ),
        sim=SimConfig(initial_soc=0.9, initial_speed_mps=10.0, max_time_s=300.0),
    )
    return base.model_copy(update=sections)


@pytest.fixture(autouse=True)
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setenv("ECOACC_CACHE_DIR", str(path))
    return path


@pytest.fixture(autouse=True)
def package_logger():
    logger = logging.getLogger(LOGGER_NAME)
    yield logger
    logger.handlers.clear()
    logger.propagate = True


@pytest.fixture(scope="session")
def config() -> EcoAccConfig:
    return corridor_config()


@pytest.fixture(scope="session")
def cost_map(config):
    return build_cost_map(config.powertrain, config.vehicle, config.costmap, workers=1)


@pytest.fixture
def artifacts(config, cost_map):
    return prepare_artifacts(config, cost_map=cost_map)


@pytest.fixture(scope="session")
def default_config() -> EcoAccConfig:
    """The shipped 2500 m corridor; only slow tests use it."""
    return load_config()


@pytest.fixture(scope="session")
def default_cost_map(default_config, tmp_path_factory):
    cache = ArtifactCache(str(tmp_path_factory.mktemp("default-cache")))
    return cached_cost_map(default_config.powertrain, default_config.vehicle, default_config.costmap, cache=cache)


@pytest.fixture
def default_artifacts(default_config, default_cost_map):
    return prepare_artifacts(default_config, cost_map=default_cost_map)
