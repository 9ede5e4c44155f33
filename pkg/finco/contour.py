"""
Integration paths in the complex time plane.

A contour is a polyline of complex waypoints that starts at t = 0, never runs
backwards in physical time, and ends on the real axis at t_final.

Propagation works on a PathSet: one main path per trajectory plus, for every
checkpoint, a straight spur from a waypoint of the main path back to the real
axis. A checkpoint is read off the end of its spur; the main path carries on
from the branch waypoint, so stopping at an intermediate time never forces
the trajectory back onto the real axis.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from finco.errors import ContourError
from finco.potentials import PotentialKind

# Run-level default: one rectangular dip below the real axis
DEFAULT_DIP_DEPTH = 0.4
DEFAULT_DIP_FRACTION = (0.05, 0.95)

# midline rows need a mostly oscillatory Omega; beyond this argument they take the dip
MIDLINE_MAX_FREQUENCY_ARG = math.pi / 3

_SAME_POINT = 1e-14


class ContourFamily(str, enum.Enum):
    REAL = "real"
    RECTANGULAR_DIP = "rectangular_dip"
    MIDLINE = "midline"


@dataclass(frozen=True)
class PathSet:
    """Per-trajectory main paths and checkpoint spurs.

    `main` has shape (n, m). The spur of times[k] leaves row i of the main path
    at main[i, branch[k]] and runs straight to the real time times[k].
    """

    main: np.ndarray
    branch: tuple
    times: tuple

    def spurs_at(self, index):
        return [t for t, b in zip(self.times, self.branch) if b == index]


def _check_times(times, t_final):
    times = sorted({float(t) for t in times if t > 0})
    if not times:
        raise ContourError("need at least one positive checkpoint time")
    if times[-1] > t_final * (1 + 1e-12):
        raise ContourError(f"checkpoint {times[-1]} lies beyond the contour end {t_final}")
    return times


@dataclass(frozen=True)
class TimeContour:
    waypoints: tuple

    def __post_init__(self):
        points = tuple(complex(w) for w in self.waypoints)
        object.__setattr__(self, "waypoints", points)
        if len(points) < 2:
            raise ContourError("a contour needs at least two waypoints")
        if points[0] != 0:
            raise ContourError(f"contour must start at 0, starts at {points[0]}")
        if points[-1].imag != 0:
            raise ContourError(f"contour must end on the real axis, ends at {points[-1]}")
        for a, b in zip(points, points[1:]):
            if abs(b - a) <= _SAME_POINT:
                raise ContourError(f"consecutive waypoints coincide at {a}")
            if b.real < a.real:
                raise ContourError(f"contour runs backwards in real time between {a} and {b}")

    @property
    def t_final(self):
        return self.waypoints[-1].real

    @property
    def segments(self):
        return list(zip(self.waypoints, self.waypoints[1:]))

    def real_stops(self):
        """Real times at which the contour touches the real axis at a waypoint."""
        return [w.real for w in self.waypoints if w.imag == 0]

    def branch_point(self, t):
        """First point along the contour whose real part is t."""
        points = list(self.waypoints)
        return points[_locate(points, t)]

    def paths(self, q, p, model, times):
        """The same polyline for every row, split at each checkpoint's branch point."""
        times = _check_times(times, self.t_final)
        points = list(self.waypoints)
        branch = tuple(_locate(points, t) for t in times)
        main = np.tile(np.asarray(points[: branch[-1] + 1]), (len(np.atleast_1d(q)), 1))
        return PathSet(main, branch, tuple(times))


def _locate(points, t):
    """Index of the first polyline point with real part t, inserted into `points` if missing."""
    tol = 1e-12 * max(1.0, abs(t))
    for i, (a, b) in enumerate(zip(points, points[1:])):
        if a.real - tol <= t <= b.real + tol:
            if abs(a.real - t) <= tol:
                return i
            if abs(b.real - t) <= tol:
                return i + 1
            points.insert(i + 1, a + (b - a) * (t - a.real) / (b.real - a.real))
            return i + 1
    raise ContourError(f"time {t} is outside the contour [0, {points[-1].real}]")


def morse_orbit(model, q, p):
    """(Omega, c, A, B) with e^{beta q(t)} = c + A cos(Omega t) + B sin(Omega t)."""
    if model.kind is not PotentialKind.MORSE:
        raise ContourError(f"midline contours need a Morse potential, got {model.kind.value}")
    D, beta = model.params["D"], model.params["beta"]
    q = np.atleast_1d(np.asarray(q, dtype=complex))
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    with np.errstate(all="ignore"):
        energy = 0.5 * p * p + model(q)
        omega = beta * np.sqrt(-2.0 * energy)
        y0 = np.exp(beta * q)
        c = -D / energy
        return omega, c, y0 - c, beta * y0 * p / omega


def morse_midline(model, q, p):
    """Frequency Omega and midline level eta of Morse orbits started at (q, p).

    The orbit is singular where e^{beta q(t)} vanishes. With z = e^{i Omega t}
    those times solve (A - iB) z^2 + 2c z + (A + iB) = 0 and form two rows in
    the Omega t plane at Im(Omega t) = -ln|z|; eta is the level halfway
    between them, fixed by the product of the roots alone.
    """
    omega, _, a, b = morse_orbit(model, q, p)
    with np.errstate(all="ignore"):
        eta = -0.5 * np.log(np.abs((a + 1j * b) / (a - 1j * b)))
    return omega, eta


def _check_dip(dip_depth):
    if not dip_depth >= 0:
        raise ContourError(f"dip depth must be non-negative, got {dip_depth}")


@dataclass(frozen=True)
class MidlineContour:
    """Per-trajectory Morse contour between the two rows of singular times.

    Each path climbs from t = 0 to the midline, follows it, and drops back to
    the real axis along a spur at every checkpoint. Rows whose frequency is
    not mostly real (unbound or nearly unbound orbits) take a full-span
    rectangular dip of `fallback_depth` instead.
    """

    t_final: float
    fallback_depth: float = DEFAULT_DIP_DEPTH

    def __post_init__(self):
        if not self.t_final > 0:
            raise ContourError(f"t_final must be positive, got {self.t_final}")
        _check_dip(self.fallback_depth)

    def paths(self, q, p, model, times):
        times = _check_times(times, self.t_final)
        omega, eta = morse_midline(model, q, p)
        usable = (
            np.isfinite(omega) & np.isfinite(eta) & (np.abs(omega) > 0)
            & (np.abs(np.angle(omega)) < MIDLINE_MAX_FREQUENCY_ARG)
        )
        omega = np.where(usable, omega, 1.0)
        eta = np.where(usable, eta, 0.0)
        t = np.asarray(times)
        on_line = (np.real(omega[:, None] * t[None, :]) + 1j * eta[:, None]) / omega[:, None]
        dip = t[None, :] - 1j * self.fallback_depth
        n = len(omega)
        main = np.empty((n, len(times) + 2), dtype=complex)
        main[:, 0] = 0.0
        main[:, 1] = np.where(usable, 1j * eta / omega, -1j * self.fallback_depth)
        main[:, 2:] = np.where(usable[:, None], on_line, dip)
        return PathSet(main, tuple(range(2, len(times) + 2)), tuple(times))


def _collapse(points):
    collapsed = [points[0]]
    for w in points[1:]:
        if abs(w - collapsed[-1]) > _SAME_POINT:
            collapsed.append(w)
    return collapsed


def _dip_points(t_start, t_end, depth, fraction):
    span = t_end - t_start
    a = t_start + fraction[0] * span
    b = t_start + fraction[1] * span
    return [complex(t_start), complex(a), complex(a, -depth), complex(b, -depth), complex(b), complex(t_end)]


def make_contour(family, t_final, dip_depth=DEFAULT_DIP_DEPTH, dip_fraction=DEFAULT_DIP_FRACTION):
    """Build a Real, RectangularDip or Midline contour from 0 to t_final.

    For Midline, dip_depth is the depth of the fallback dip.
    """
    family = ContourFamily(family)
    if not t_final > 0:
        raise ContourError(f"t_final must be positive, got {t_final}")
    if family is ContourFamily.REAL:
        return TimeContour((0.0, t_final))
    _check_dip(dip_depth)
    if family is ContourFamily.MIDLINE:
        return MidlineContour(float(t_final), dip_depth)
    start, end = dip_fraction
    if not 0.0 <= start < end <= 1.0:
        raise ContourError(f"dip fraction must satisfy 0 <= start < end <= 1, got {dip_fraction}")
    return TimeContour(tuple(_collapse(_dip_points(0.0, t_final, dip_depth, (start, end)))))


def segment_steps(a, b, dt_max):
    """(number of steps, per-row complex step) for straight legs a -> b."""
    if not dt_max > 0:
        raise ContourError(f"dt_max must be positive, got {dt_max}")
    delta = np.asarray(b, dtype=complex) - np.asarray(a, dtype=complex)
    longest = float(np.max(np.abs(delta), initial=0.0))
    n = max(1, math.ceil(longest / dt_max - 1e-9))
    return n, delta / n


def discretize(contour, dt_max):
    """Complex time steps along the contour, each no longer than dt_max.

    The last step absorbs rounding so the steps sum to t_final exactly.
    """
    steps = []
    for a, b in contour.segments:
        n, dt = segment_steps(a, b, dt_max)
        steps.extend([complex(dt)] * n)
    head = np.asarray(steps[:-1], dtype=complex)
    last = complex(contour.t_final - math.fsum(head.real), -math.fsum(head.imag))
    steps[-1] = last
    return steps
