"""Cellwise Gauss-Lobatto collocation grids for cumulative integrals.

Every cell ``[t_i, t_{i+1}]`` of a sorted grid carries ``n`` Lobatto nodes
whose first and last members are the cell ends.  Integrands sampled at the
nodes are integrated by the spectral integration matrix of the node set, so
iterated integral operators (Picard sweeps) never need to interpolate a
previous iterate: it is already known at every node they use.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L

from .errors import DomainError

DEFAULT_NODES = 9


@lru_cache(maxsize=8)
def lobatto(n):
    """Nodes on [-1, 1], the cumulative integration matrix, and the matrix of a
    coarser interpolatory rule on every other node (for error estimates)."""
    if n < 3 or n % 2 == 0:
        raise ValueError("use an odd number of at least 3 nodes")
    inner = L.Legendre.basis(n - 1).deriv().roots()
    x = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    V = L.legvander(x, n - 1)
    coef = np.linalg.inv(V)                 # column k: Legendre coefficients of l_k
    S = np.empty((n, n))
    for k in range(n):
        anti = L.legint(coef[:, k], lbnd=-1.0)
        S[:, k] = L.legval(x, anti)
    xs = x[::2]
    m = len(xs)
    Vs = L.legvander(xs, m - 1)
    cs = np.linalg.inv(Vs)
    ws = np.array([L.legval(1.0, L.legint(cs[:, k], lbnd=-1.0)) for k in range(m)])
    return x, S, ws


class NodeGrid:
    """Lobatto nodes on every cell of ``grid``; integrals are taken from ``origin``.

    ``origin`` must be one of the grid points.
    """

    def __init__(self, grid, origin, n_nodes=DEFAULT_NODES):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing with at least two points")
        hits = np.flatnonzero(grid == origin)
        if len(hits) != 1:
            raise DomainError("the integration origin must be a grid point")
        self.grid = grid
        self.origin_index = int(hits[0])
        self.n = n_nodes
        x, S, ws = lobatto(n_nodes)
        self._S, self._ws = S, ws
        self.half = 0.5 * np.diff(grid)                       # (m,)
        mid = 0.5 * (grid[1:] + grid[:-1])
        self.nodes = mid[:, None] + self.half[:, None] * x[None, :]
        self.nodes[:, 0] = grid[:-1]
        self.nodes[:, -1] = grid[1:]

    @property
    def n_cells(self):
        return len(self.grid) - 1

    def partial(self, f):
        """Integrals from each cell start to each of its nodes, shape (m, n)."""
        return self.half[:, None] * (f @ self._S.T)

    def cumulative(self, f):
        """Integral of ``f`` (sampled at the nodes) from the origin to every node."""
        part = self.partial(f)
        cell = part[:, -1]
        starts = np.concatenate([[0.0], np.cumsum(cell)])
        starts -= starts[self.origin_index]
        return starts[:-1, None] + part

    def at_grid(self, nodal):
        """Grid-point values from nodal values (cell starts plus the last end)."""
        return np.concatenate([nodal[:, 0], nodal[-1:, -1]])

    def cell_error(self, f):
        """Per-cell discrepancy between the full rule and the coarse sub-rule."""
        full = self.half * (f @ self._S[-1])
        coarse = self.half * (f[:, ::2] @ self._ws)
        return np.abs(full - coarse)

    def cumulative_error(self, f):
        """Running sum of :meth:`cell_error` away from the origin, per grid point."""
        e = self.cell_error(f)
        out = np.zeros(len(self.grid))
        i0 = self.origin_index
        out[i0 + 1:] = np.cumsum(e[i0:])
        if i0 > 0:
            out[:i0] = np.cumsum(e[:i0][::-1])[::-1]
        return out


def uniform_phase_grid(omega_max, a, b, points_per_unit=64, include=()):
    """Grid on [a, b] with about ``points_per_unit`` points per radian of phase.

    Uses the uniform spacing ``1/(points_per_unit * omega_max)`` and merges
    the extra instants in ``include``.
    """
    lo, hi = min(a, b), max(a, b)
    n = max(2, int(np.ceil((hi - lo) * omega_max * points_per_unit)) + 1)
    g = np.linspace(lo, hi, n)
    extra = np.asarray([x for x in include if lo <= x <= hi], dtype=float)
    return merge_points(g, extra)


def merge_points(grid, extra, rel_gap=1e-9):
    """Union of two point sets, dropping near-duplicates (keeps the ``extra`` copy)."""
    grid = np.asarray(grid, dtype=float)
    extra = np.unique(np.asarray(extra, dtype=float))
    if extra.size == 0:
        return np.unique(grid)
    scale = max(1.0, float(np.max(np.abs(grid))) if grid.size else 1.0)
    keep = np.ones(len(grid), dtype=bool)
    pos = np.searchsorted(extra, grid)
    for shift in (0, -1):
        idx = np.clip(pos + shift, 0, len(extra) - 1)
        keep &= np.abs(grid - extra[idx]) > rel_gap * scale
    return np.unique(np.concatenate([grid[keep], extra]))
