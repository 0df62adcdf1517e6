import numpy as np


def bracket(grid: np.ndarray, x):
    """Lower node index and fractional position of ``x`` on an ascending grid."""
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    frac = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return idx, frac


def bilinear(x_grid: np.ndarray, y_grid: np.ndarray, values: np.ndarray, x, y) -> np.ndarray:
    """Bilinear interpolation of ``values[x, y]``.

    Points outside the hull are +inf, and so is any point whose
    interpolation stencil has an infinite corner with positive weight.
    Corners with zero weight are skipped, so node queries are bit-exact.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    inside = (x >= x_grid[0]) & (x <= x_grid[-1]) & (y >= y_grid[0]) & (y <= y_grid[-1])

    i, fx = bracket(x_grid, np.where(inside, x, x_grid[0]))
    j, fy = bracket(y_grid, np.where(inside, y, y_grid[0]))

    value = np.zeros(x.shape)
    for di, wx in ((0, 1.0 - fx), (1, fx)):
        for dj, wy in ((0, 1.0 - fy), (1, fy)):
            weight = wx * wy
            corner = values[i + di, j + dj]
            live = weight > 0
            value = value + np.where(live, weight * np.where(live, corner, 0.0), 0.0)
            value = np.where(live & ~np.isfinite(corner), np.inf, value)

    return np.where(inside, value, np.inf)
