import numpy as np
import pytest

from ecoacc.config import CostMapGrid
from ecoacc.core.cache import ArtifactCache, load_artifact, sidecar_path
from ecoacc.core.costmap import (
    _split_list,
    build_cost_map,
    cached_cost_map,
    cost_lookup,
    interpolate,
    load_cost_map,
    save_cost_map,
    soc_grid,
)
from ecoacc.core.grid import bilinear
from ecoacc.core.powertrain import ecms_split
from ecoacc.errors import InfeasibleDemand, OutOfHull

TINY_GRID = CostMapGrid(speed_max=20.0, speed_points=5, torque_points=9, soc_min=0.5, soc_max=0.6, soc_step=0.05)


def test_soc_grid_uses_configured_step():
    assert list(soc_grid(CostMapGrid(soc_min=0.1, soc_max=0.15, soc_step=0.01))) == [0.1, 0.11, 0.12, 0.13, 0.14, 0.15]


def test_split_list_balances_chunks():
    assert _split_list(list(range(7)), 3) == [[0, 1, 2], [3, 4], [5, 6]]
    assert _split_list([1], 4) == [[1]]


@pytest.mark.parametrize("i, j", [(10, 5), (10, 20), (10, 24), (5, 28), (14, 30), (3, 2)])
def test_cells_equal_fresh_split(cost_map, config, i, j):
    plane = cost_map.plane_index(0.9)
    v, t_w = cost_map.v_grid[i], cost_map.torque_grid[j]
    stored = cost_map.cost[plane, i, j]
    try:
        _, cost = ecms_split(v, t_w, float(cost_map.soc_grid[plane]), config.powertrain, config.vehicle)
    except InfeasibleDemand:
        assert np.isinf(stored)
    else:
        assert stored == pytest.approx(cost, rel=1e-12)


def test_braking_region_has_negative_cost(cost_map):
    plane = cost_map.cost[cost_map.plane_index(0.9)]
    assert np.nanmin(np.where(np.isfinite(plane), plane, np.nan)) < 0


def test_engine_start_makes_a_cost_jump(cost_map):
    plane = cost_map.plane_index(0.9)
    i = int(np.argmin(np.abs(cost_map.v_grid - 10.0)))
    cost = cost_map.cost[plane, i]
    engine = cost_map.engine_on[plane, i]
    flips = np.flatnonzero(~engine[:-1] & engine[1:] & np.isfinite(cost[1:]))
    assert flips.size
    j = flips[0]
    electric_steps = np.diff(cost[: j + 1][np.isfinite(cost[: j + 1])])
    assert cost[j + 1] - cost[j] > 3 * electric_steps.max()


def test_cost_non_decreasing_in_torque_while_electric(cost_map):
    plane = cost_map.plane_index(0.9)
    i = int(np.argmin(np.abs(cost_map.v_grid - 10.0)))
    cost = cost_map.cost[plane, i]
    electric = np.isfinite(cost) & ~cost_map.engine_on[plane, i]
    assert np.all(np.diff(cost[electric]) >= -1e-9)


def test_lookup_on_node_is_exact(cost_map):
    plane = cost_map.plane_index(0.9)
    assert cost_lookup(cost_map, 10.0, 200.0, 0.9) == cost_map.cost[plane, 10, 22]


def test_lookup_midpoint_along_speed_is_mean(cost_map):
    plane = cost_map.plane_index(0.9)
    expected = 0.5 * (cost_map.cost[plane, 8, 22] + cost_map.cost[plane, 9, 22])
    assert cost_lookup(cost_map, 8.5, 200.0, 0.9) == pytest.approx(expected)


def test_lookup_outside_hull_raises(cost_map):
    with pytest.raises(OutOfHull):
        cost_lookup(cost_map, 10.0, 2500.0, 0.9)
    with pytest.raises(OutOfHull):
        cost_lookup(cost_map, 10.0, 0.0, 0.5)


def test_vectorised_interpolation_marks_hull_exits(cost_map):
    values = interpolate(cost_map, np.array([10.0, 10.0, 25.0]), np.array([0.0, 2100.0, 0.0]), 0.9)
    assert np.isfinite(values[0])
    assert np.isinf(values[1:]).all()


def test_bilinear_rejects_stencils_touching_infeasible_corners():
    values = np.array([[0.0, 1.0], [2.0, np.inf]])
    grid = np.array([0.0, 1.0])
    assert bilinear(grid, grid, values, 0.0, 1.0) == 1.0
    assert bilinear(grid, grid, values, 0.5, 0.0) == 1.0
    assert np.isinf(bilinear(grid, grid, values, 0.5, 0.5))


def test_save_and_load_keep_metadata(tmp_path, config):
    cost_map = build_cost_map(config.powertrain, config.vehicle, TINY_GRID, workers=1)
    path = tmp_path / "costmap.npz"
    save_cost_map(cost_map, path)
    assert sidecar_path(path).exists()
    loaded = load_cost_map(path)
    np.testing.assert_array_equal(loaded.cost, cost_map.cost)
    assert loaded.params_hash == cost_map.params_hash
    _, metadata = load_artifact(path)
    assert metadata["grid"]["torque_points"] == 9


def test_cached_cost_map_reuses_artifact(config, cache_dir):
    cache = ArtifactCache()
    first = cached_cost_map(config.powertrain, config.vehicle, TINY_GRID, cache=cache, workers=1)
    assert len(cache.entries()) == 1
    second = cached_cost_map(config.powertrain, config.vehicle, TINY_GRID, cache=cache, workers=1)
    np.testing.assert_array_equal(first.cost, second.cost)
    assert str(cache_dir) == cache.cache_dir
    cache.clear_cache()
    assert cache.entries() == []
