"""
Quadrature grids over the initial complex manifold q(t0).

A grid starts as a uniform midpoint rule over a rectangle and can be refined
by splitting chosen cells 2x2. Each point remembers its refinement level and
its cell index at that level, so refined grids can be laid back onto a
regular lattice for labelling and filtering.
"""

from dataclasses import dataclass

import numpy as np

from finco.errors import InputDomainError


@dataclass(frozen=True)
class Rect:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise InputDomainError(f"degenerate rectangle {self}")

    @property
    def area(self):
        return (self.re_max - self.re_min) * (self.im_max - self.im_min)

    @classmethod
    def around(cls, q0, re_span=(-3.5, 4.5), im_span=(-3.5, 3.5)):
        """Rectangle offset from a real center position."""
        return cls(q0 + re_span[0], q0 + re_span[1], im_span[0], im_span[1])


@dataclass
class ManifoldGrid:
    rect: Rect
    nx: int
    ny: int
    points: np.ndarray
    weights: np.ndarray
    level: np.ndarray
    ix: np.ndarray
    iy: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def max_level(self):
        return int(self.level.max()) if len(self.level) else 0

    def cell_size(self, level):
        scale = 2**level
        return (
            (self.rect.re_max - self.rect.re_min) / (self.nx * scale),
            (self.rect.im_max - self.rect.im_min) / (self.ny * scale),
        )

    def keys(self):
        """Hashable identity of each cell, stable across refinements."""
        return list(zip(self.level.tolist(), self.ix.tolist(), self.iy.tolist()))

    def integrate(self, values):
        return np.sum(np.asarray(values) * self.weights)


def _centers(rect, nx, ny, level, ix, iy):
    scale = 2**level
    hx = (rect.re_max - rect.re_min) / (nx * scale)
    hy = (rect.im_max - rect.im_min) / (ny * scale)
    return (rect.re_min + (ix + 0.5) * hx) + 1j * (rect.im_min + (iy + 0.5) * hy)


def uniform_grid(rect, nx, ny):
    """Midpoint rule: nx*ny cell centers, each weighted by the cell area."""
    if nx < 1 or ny < 1:
        raise InputDomainError(f"grid resolution must be at least 1x1, got {nx}x{ny}")
    iy, ix = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    level = np.zeros(ix.size, dtype=np.int64)
    weights = np.full(ix.size, rect.area / (nx * ny))
    return ManifoldGrid(rect, nx, ny, _centers(rect, nx, ny, level, ix, iy), weights, level, ix, iy)


def refine(grid, scores, budget):
    """Split the `budget` highest-scoring cells into 2x2 children.

    Children replace their parent in place, so point order stays deterministic.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(grid),):
        raise InputDomainError(f"expected {len(grid)} scores, got shape {scores.shape}")
    budget = min(int(budget), len(grid))
    if budget <= 0:
        return grid
    ranked = np.argsort(-np.nan_to_num(scores, nan=-np.inf), kind="stable")
    chosen = np.zeros(len(grid), dtype=bool)
    chosen[ranked[:budget]] = True

    level, ix, iy, weights = [], [], [], []
    for k in range(len(grid)):
        if not chosen[k]:
            level.append(grid.level[k])
            ix.append(grid.ix[k])
            iy.append(grid.iy[k])
            weights.append(grid.weights[k])
            continue
        for dy in (0, 1):
            for dx in (0, 1):
                level.append(grid.level[k] + 1)
                ix.append(2 * grid.ix[k] + dx)
                iy.append(2 * grid.iy[k] + dy)
                weights.append(0.25 * grid.weights[k])
    level, ix, iy = (np.asarray(a, dtype=np.int64) for a in (level, ix, iy))
    points = _centers(grid.rect, grid.nx, grid.ny, level, ix, iy)
    return ManifoldGrid(grid.rect, grid.nx, grid.ny, points, np.asarray(weights), level, ix, iy)


def _blocks(grid):
    """Row/column slices of the finest lattice covered by each point."""
    top = grid.max_level
    span = 2 ** (top - grid.level)
    rows0 = grid.iy * span
    cols0 = grid.ix * span
    return rows0, cols0, span


def rasterize(grid, values, fill=np.nan):
    """Lay per-point values onto the finest lattice; shape (ny*2^L, nx*2^L)."""
    values = np.asarray(values)
    top = grid.max_level
    shape = (grid.ny * 2**top, grid.nx * 2**top)
    dtype = complex if np.iscomplexobj(values) else float
    raster = np.full(shape, fill, dtype=dtype)
    if top == 0:
        raster[grid.iy, grid.ix] = values
        return raster
    rows0, cols0, span = _blocks(grid)
    for k in range(len(grid)):
        raster[rows0[k]:rows0[k] + span[k], cols0[k]:cols0[k] + span[k]] = values[k]
    return raster


def lattice_points(grid):
    """Complex centers of the finest lattice cells, same shape as `rasterize`."""
    top = grid.max_level
    ny, nx = grid.ny * 2**top, grid.nx * 2**top
    iy, ix = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    return _centers(grid.rect, grid.nx, grid.ny, top, ix, iy)


def point_indices(grid):
    """Lattice (row, col) of each point's lower-left fine cell."""
    rows0, cols0, _ = _blocks(grid)
    return rows0, cols0


def gradient_scores(grid, values):
    """Variation of a (complex) field across each cell: |grad v| * cell diameter."""
    raster = rasterize(grid, values, fill=0.0)
    hx, hy = grid.cell_size(grid.max_level)
    if min(raster.shape) < 2:
        return np.zeros(len(grid))
    gy, gx = np.gradient(raster, hy, hx)
    magnitude = np.sqrt(np.abs(gx) ** 2 + np.abs(gy) ** 2)
    rows0, cols0, span = _blocks(grid)
    scores = np.empty(len(grid))
    for k in range(len(grid)):
        block = magnitude[rows0[k]:rows0[k] + span[k], cols0[k]:cols0[k] + span[k]]
        scores[k] = block.max()
    return scores * np.sqrt(grid.weights)
