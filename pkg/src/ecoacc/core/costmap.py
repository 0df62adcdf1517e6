"""Empirical power-cost map g_c*(v, T_w; SOC) and its lookups."""
import datetime
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ecoacc.config import CostMapGrid, PowertrainParams, VehicleParams, config_hash
from ecoacc.core.cache import ArtifactCache, load_artifact, save_artifact
from ecoacc.core.grid import bilinear
from ecoacc.core.powertrain import split_table
from ecoacc.errors import ConfigError, OutOfHull

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostMap:
    soc_grid: np.ndarray
    v_grid: np.ndarray
    torque_grid: np.ndarray
    cost: np.ndarray  # (soc, v, T_w), +inf where no split is admissible
    engine_on: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def plane_index(self, soc: float) -> int:
        step = self.soc_grid[1] - self.soc_grid[0] if len(self.soc_grid) > 1 else 1.0
        if soc < self.soc_grid[0] - step / 2 or soc > self.soc_grid[-1] + step / 2:
            raise OutOfHull(f"SOC {soc:.4f} outside [{self.soc_grid[0]:.2f}, {self.soc_grid[-1]:.2f}]")
        return int(np.argmin(np.abs(self.soc_grid - soc)))

    def clamp_soc(self, soc: float) -> float:
        """Measured SOC held inside the tabulated range."""
        return float(np.clip(soc, self.soc_grid[0], self.soc_grid[-1]))

    @property
    def params_hash(self) -> str:
        return self.metadata.get("params_hash", "")


def soc_grid(grid: CostMapGrid) -> np.ndarray:
    count = int(round((grid.soc_max - grid.soc_min) / grid.soc_step)) + 1
    return np.round(grid.soc_min + grid.soc_step * np.arange(count), 10)


def _split_list(lst: List[Any], num_chunks: int) -> List[List[Any]]:
    avg = len(lst) // num_chunks
    remainder = len(lst) % num_chunks
    result = []
    start = 0

    for i in range(num_chunks):
        chunk_size = avg + (1 if i < remainder else 0)
        result.append(lst[start:start + chunk_size])
        start += chunk_size

    return [chunk for chunk in result if chunk]


def _build_planes(job: Tuple[List[float], np.ndarray, np.ndarray, PowertrainParams, VehicleParams]):
    socs, v_grid, torque_grid, params, vehicle = job
    v_mesh, t_mesh = np.meshgrid(v_grid, torque_grid, indexing="ij")
    costs, engine = [], []
    for soc in socs:
        table = split_table(v_mesh, t_mesh, soc, params, vehicle)
        costs.append(table.cost)
        engine.append(table.engine_on)
    return np.stack(costs), np.stack(engine)


def build_cost_map(
    params: PowertrainParams,
    vehicle: VehicleParams,
    grid: CostMapGrid,
    workers: Optional[int] = None,
) -> CostMap:
    socs = soc_grid(grid)
    v_grid = np.linspace(grid.speed_min, grid.speed_max, grid.speed_points)
    torque_grid = np.linspace(grid.torque_min, grid.torque_max, grid.torque_points)
    workers = workers or os.cpu_count() or 4

    chunks = _split_list(list(socs), min(workers, len(socs)))
    jobs = [(chunk, v_grid, torque_grid, params, vehicle) for chunk in chunks]
    logger.info("Building cost map: %d SOC planes x %d speeds x %d torques", len(socs), len(v_grid), len(torque_grid))

    if workers == 1:
        results = [_build_planes(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_build_planes, jobs))

    cost = np.concatenate([r[0] for r in results])
    engine_on = np.concatenate([r[1] for r in results])
    for array in (socs, v_grid, torque_grid, cost, engine_on):
        array.setflags(write=False)

    metadata = {
        "params_hash": config_hash(params, vehicle, grid),
        "grid": grid.model_dump(mode="json"),
        "created": datetime.datetime.now().isoformat(timespec="seconds"),
        "admissible_cells": int(np.isfinite(cost).sum()),
    }
    return CostMap(socs, v_grid, torque_grid, cost, engine_on, metadata)


def interpolate(cost_map: CostMap, v, t_w, soc: float) -> np.ndarray:
    """Vectorised bilinear lookup on the nearest SOC plane.

    Out-of-hull queries and queries touching an inadmissible corner with
    positive weight give +inf.
    """
    plane = cost_map.cost[cost_map.plane_index(soc)]
    return bilinear(cost_map.v_grid, cost_map.torque_grid, plane, v, t_w)


def cost_lookup(cost_map: CostMap, v: float, t_w: float, soc: float) -> float:
    value = float(interpolate(cost_map, v, t_w, soc))
    if not np.isfinite(value):
        raise OutOfHull(f"(v={v:.3f} m/s, T_w={t_w:.1f} N·m) outside the admissible cost-map hull at SOC {soc:.3f}")
    return value


def save_cost_map(cost_map: CostMap, path: Path) -> None:
    save_artifact(path, _arrays_of(cost_map), cost_map.metadata)


def load_cost_map(path: Path, expected_hash: Optional[str] = None) -> CostMap:
    try:
        arrays, metadata = load_artifact(path)
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"Cannot load cost map {path}: {e}") from e
    cost_map = _from_arrays(arrays, metadata)
    if expected_hash is not None and cost_map.params_hash != expected_hash:
        raise ConfigError(f"Cost map {path} was built for other powertrain parameters or grids")
    return cost_map


def _from_arrays(arrays: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> CostMap:
    for array in arrays.values():
        array.setflags(write=False)
    return CostMap(
        arrays["soc_grid"],
        arrays["v_grid"],
        arrays["torque_grid"],
        arrays["cost"],
        arrays["engine_on"],
        metadata,
    )


def cached_cost_map(
    params: PowertrainParams,
    vehicle: VehicleParams,
    grid: CostMapGrid,
    cache: Optional[ArtifactCache] = None,
    workers: Optional[int] = None,
) -> CostMap:
    cache = cache or ArtifactCache()
    key = cache.get_cache_key("costmap", config_hash(params, vehicle, grid))
    cached = cache.load(key)
    if cached is not None:
        logger.info("Using cached cost map %s", key[:8])
        return _from_arrays(*cached)

    cost_map = build_cost_map(params, vehicle, grid, workers=workers)
    path = cache.save(key, _arrays_of(cost_map), cost_map.metadata)
    logger.info("Cached cost map at %s", path)
    return cost_map


def _arrays_of(cost_map: CostMap) -> Dict[str, np.ndarray]:
    return {
        "soc_grid": cost_map.soc_grid,
        "v_grid": cost_map.v_grid,
        "torque_grid": cost_map.torque_grid,
        "cost": cost_map.cost,
        "engine_on": cost_map.engine_on,
    }
