"""
Phase-space structure of the initial manifold.

Branch maps (where trajectories land on the real axis), weight-field maps,
caustics of the final Gaussian manifold and phase scars, all laid onto the
finest lattice of the sampling grid.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import ndimage

from finco.sampling import lattice_points, point_indices, rasterize

logger = logging.getLogger(__name__)

DEFAULT_BRANCH_THRESHOLD = 0.05
DEFAULT_MIN_BRANCH_SIZE = 5
DEFAULT_MAX_CROSSING_STEP = 4.0
DEFAULT_CAUSTIC_THRESHOLD = 1e-3
DEFAULT_SCAR_JUMP = 0.5 * np.pi
DEFAULT_MIN_SCAR_EDGES = 2

FOUR_NEIGHBORS = ndimage.generate_binary_structure(2, 1)
EIGHT_NEIGHBORS = ndimage.generate_binary_structure(2, 2)


class FieldKind(str, enum.Enum):
    IM_FINAL_Q = "im_final_q"
    WEIGHT = "weight"
    JAC_MAG = "jac_mag"
    ARG_D = "arg_d"


@dataclass
class FieldMap:
    grid: object
    values: np.ndarray
    kind: FieldKind
    time: float = 0.0

    def __post_init__(self):
        self.kind = FieldKind(self.kind)
        self.values = np.asarray(self.values)
        if self.values.shape != (len(self.grid),):
            raise ValueError(f"{len(self.grid)} grid points but {self.values.shape} values")

    def raster(self, fill=np.nan):
        return rasterize(self.grid, self.values, fill=fill)

    def to_frame(self):
        """Per-point table; complex fields are written as magnitude and phase."""
        frame = pd.DataFrame({
            "re_q0": self.grid.points.real,
            "im_q0": self.grid.points.imag,
            "level": self.grid.level,
        })
        if np.iscomplexobj(self.values):
            frame["magnitude"] = np.abs(self.values)
            frame["phase"] = np.angle(self.values)
        else:
            frame["value"] = self.values
        return frame


@dataclass
class ScarSegment:
    """Chain of adjacent lattice edges across which the phase jumps."""

    points: np.ndarray  # complex midpoints of the flagged edges
    start: complex
    end: complex

    def __len__(self):
        return len(self.points)


def _state_at(record, time):
    return record.final if time is None else record.checkpoint_at(time).state


def _time_of(record, time):
    return record.checkpoints[-1].time if time is None else float(time)


def _crossing_cells(im_q, max_step):
    """Cells on either side of a lattice edge across which Im q changes sign.

    Edges whose step exceeds `max_step` are jumps between sheets, not
    crossings of the real axis.
    """
    marked = np.zeros(im_q.shape, dtype=bool)
    for axis in (0, 1):
        a = np.moveaxis(im_q, axis, 0)
        lo, hi = a[:-1], a[1:]
        with np.errstate(invalid="ignore"):
            crossing = np.isfinite(lo) & np.isfinite(hi) & (lo * hi < 0) & (np.abs(hi - lo) <= max_step)
        view = np.moveaxis(marked, axis, 0)
        view[:-1] |= crossing
        view[1:] |= crossing
    return marked


def branch_labels(record, grid, threshold=DEFAULT_BRANCH_THRESHOLD, min_size=DEFAULT_MIN_BRANCH_SIZE,
                  time=None, max_step=DEFAULT_MAX_CROSSING_STEP):
    """Per-point branch label (0 = off-branch) and the number of branches.

    A branch is a 4-connected region of the finest lattice where trajectories
    land on the real axis: cells with |Im q(t)| below `threshold`, plus the
    cells on both sides of every edge where Im q(t) changes sign, so that
    branches thinner than one cell are still traced. Regions smaller than
    `min_size` cells are dropped.
    """
    state = _state_at(record, time)
    im_q = np.where(state.valid & np.isfinite(state.qt), state.qt.imag, np.nan)
    raster = rasterize(grid, im_q, fill=np.nan)
    with np.errstate(invalid="ignore"):
        lattice = (np.abs(raster) < threshold) | _crossing_cells(raster, max_step)
    labels, found = ndimage.label(lattice, structure=FOUR_NEIGHBORS)
    if found == 0:
        return np.zeros(len(grid), dtype=np.int64), 0
    sizes = ndimage.sum(lattice, labels, range(1, found + 1))
    kept = np.nonzero(sizes >= min_size)[0] + 1
    relabel = np.zeros(found + 1, dtype=np.int64)
    relabel[kept] = np.arange(1, len(kept) + 1)
    rows, cols = point_indices(grid)
    return relabel[labels[rows, cols]], len(kept)


def branch_map(record, grid, threshold=DEFAULT_BRANCH_THRESHOLD, min_size=DEFAULT_MIN_BRANCH_SIZE, time=None):
    """|Im q(t)| over the initial manifold plus the branch count."""
    state = _state_at(record, time)
    field = FieldMap(grid, np.abs(state.qt.imag), FieldKind.IM_FINAL_Q, _time_of(record, time))
    _, count = branch_labels(record, grid, threshold, min_size, time)
    logger.info(f"  Branch map at t={field.time:.6g}: {count} branches")
    return field, count


def weight_map(sample, grid):
    """|J| times the coherent-state overlap per point, before the quadrature weight."""
    return FieldMap(grid, np.asarray(sample.contribution, dtype=complex), FieldKind.WEIGHT, sample.time)


def jacobian_map(sample, grid):
    return FieldMap(grid, np.asarray(sample.jac_mag, dtype=float), FieldKind.JAC_MAG, sample.time)


def arg_d_map(record, grid, time=None):
    state = _state_at(record, time)
    return FieldMap(grid, state.arg_d.astype(float), FieldKind.ARG_D, _time_of(record, time))


def _wrap(phase):
    return np.mod(phase + np.pi, 2 * np.pi) - np.pi


def _edge_residuals(raster):
    """Phase steps between lattice neighbours with the local trend removed.

    Complex rasters use the wrapped phase of neighbour ratios; real rasters
    are phases already and are differenced directly.
    """
    if np.iscomplexobj(raster):
        ok = np.isfinite(raster) & (np.abs(raster) > 0)
        with np.errstate(all="ignore"):
            steps = (np.angle(raster[:, 1:] / raster[:, :-1]), np.angle(raster[1:, :] / raster[:-1, :]))
    else:
        ok = np.isfinite(raster)
        steps = (np.diff(raster, axis=1), np.diff(raster, axis=0))
    valid = (ok[:, 1:] & ok[:, :-1], ok[1:, :] & ok[:-1, :])
    residuals = []
    for step, good in zip(steps, valid):
        step = np.where(good, step, 0.0)
        residual = step - ndimage.median_filter(step, size=3, mode="nearest")
        if np.iscomplexobj(raster):
            residual = _wrap(residual)
        residuals.append(np.where(good, residual, 0.0))
    return residuals


def detect_scars(field, jump=DEFAULT_SCAR_JUMP, min_edges=DEFAULT_MIN_SCAR_EDGES):
    """Lines across which the field's phase jumps by more than `jump`.

    Works on an edge lattice of shape (2ny-1, 2nx-1): cells at (even, even),
    horizontal neighbour edges at (even, odd), vertical ones at (odd, even).
    A corner between two or more flagged edges joins them into one chain.
    """
    raster = field.raster()
    centers = lattice_points(field.grid)
    res_x, res_y = _edge_residuals(raster)
    ny, nx = raster.shape
    edges = np.zeros((2 * ny - 1, 2 * nx - 1), dtype=bool)
    edges[0::2, 1::2] = np.abs(res_x) > jump
    edges[1::2, 0::2] = np.abs(res_y) > jump
    incident = (
        edges[0:-1:2, 1::2].astype(int) + edges[2::2, 1::2]
        + edges[1::2, 0:-1:2] + edges[1::2, 2::2]
    )
    edges[1::2, 1::2] = incident >= 2

    # complex coordinate of every edge-lattice site
    sites = np.zeros(edges.shape, dtype=complex)
    sites[0::2, 0::2] = centers
    sites[0::2, 1::2] = 0.5 * (centers[:, 1:] + centers[:, :-1])
    sites[1::2, 0::2] = 0.5 * (centers[1:, :] + centers[:-1, :])
    sites[1::2, 1::2] = 0.25 * (centers[1:, 1:] + centers[1:, :-1] + centers[:-1, 1:] + centers[:-1, :-1])

    labels, found = ndimage.label(edges, structure=EIGHT_NEIGHBORS)
    is_edge = np.zeros(edges.shape, dtype=bool)
    is_edge[0::2, 1::2] = True
    is_edge[1::2, 0::2] = True
    segments = []
    for label in range(1, found + 1):
        members = labels == label
        if np.count_nonzero(members & is_edge) < min_edges:
            continue
        points = sites[members & is_edge]
        segments.append(ScarSegment(points, *_endpoints(points)))
    logger.debug(f"  Scar search on {field.kind.value}: {len(segments)} segments")
    return segments


def _endpoints(points):
    """Extreme points along the segment's principal direction."""
    if len(points) == 1:
        return complex(points[0]), complex(points[0])
    xy = np.column_stack([points.real, points.imag])
    centered = xy - xy.mean(axis=0)
    direction = np.linalg.svd(centered, full_matrices=False)[2][0]
    along = centered @ direction
    return complex(points[np.argmin(along)]), complex(points[np.argmax(along)])


def caustic_points(record, grid, gamma_f, threshold=DEFAULT_CAUSTIC_THRESHOLD, time=None):
    """Initial positions where |D| has a local lattice minimum below `threshold`."""
    state = _state_at(record, time)
    abs_d = np.where(state.valid, np.abs(state.d_value(gamma_f)), np.inf)
    raster = rasterize(grid, abs_d, fill=np.inf)
    minima = (raster == ndimage.minimum_filter(raster, size=3, mode="nearest")) & (raster < threshold)
    return lattice_points(grid)[minima]


def real_accessible(complex_record, real_record, tol=1e-6, time=None):
    """Mask of trajectories whose state at `time` is also reached along the real contour."""
    a = _state_at(complex_record, time)
    b = _state_at(real_record, time)
    if len(a) != len(b):
        raise ValueError(f"records differ in size: {len(a)} vs {len(b)}")
    with np.errstate(invalid="ignore"):
        close_q = np.abs(a.qt - b.qt) <= tol * (1.0 + np.abs(a.qt))
        close_p = np.abs(a.pt - b.pt) <= tol * (1.0 + np.abs(a.pt))
    return a.valid & b.valid & close_q & close_p
