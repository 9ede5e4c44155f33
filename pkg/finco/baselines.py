"""
Comparison reconstructions that need no coherent-state transform.

Root search: find the initial points whose trajectories end exactly at a
real x and sum exp(i S0) over them. Taylor continuation: expand the action
of the nearest propagated trajectory about its complex end point.
"""

import logging
from dataclasses import dataclass

import numpy as np

from finco.diagnostics import DEFAULT_BRANCH_THRESHOLD, DEFAULT_MIN_BRANCH_SIZE, branch_labels
from finco.dynamics import StepperOptions, init_from_gaussian, propagate
from finco.errors import InputDomainError, NoRoots
from finco.reconstruction import WavefunctionGrid

logger = logging.getLogger(__name__)

ROOT_TOLERANCE = 1e-10
DEDUPLICATE_DISTANCE = 1e-6


@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 50
    tol: float = ROOT_TOLERANCE
    dedup: float = DEDUPLICATE_DISTANCE
    max_step: float = 1.0


def _final_states(g, model, contour, q0, stepper, gamma_f):
    state0 = init_from_gaussian(g, q0, gamma_f)
    return propagate(state0, contour, model, stepper, gamma_f).final


def find_roots(g, model, contour, x, seeds, newton_opts=NewtonOptions(), stepper=StepperOptions(), gamma_f=0.5):
    """Initial points q0 with q(t; q0) = x, and their final states.

    Newton iteration on F(q0) = q(t; q0) - x, run for all seeds at once with
    dF/dq0 = M_qq + M_qp S2(t0). Steps longer than `max_step` are shortened.
    """
    q0 = np.atleast_1d(np.asarray(seeds, dtype=complex)).copy()
    if not np.all(np.isfinite(q0)):
        raise InputDomainError("root-search seeds must be finite")
    active = np.ones(len(q0), dtype=bool)
    converged = np.zeros(len(q0), dtype=bool)
    for _ in range(newton_opts.max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        final = _final_states(g, model, contour, q0[idx], stepper, gamma_f)
        residual = final.qt - x
        done = final.valid & (np.abs(residual) < newton_opts.tol)
        converged[idx[done]] = True
        active[idx[done | ~final.valid]] = False

        going = final.valid & ~done
        slope = final.m[:, 1, 1] + final.m[:, 1, 0] * g.s2
        with np.errstate(all="ignore"):
            step = residual / slope
        step = np.where(np.isfinite(step), step, 0.0)
        length = np.abs(step)
        step = np.where(length > newton_opts.max_step, step * newton_opts.max_step / np.maximum(length, 1e-300), step)
        active[idx[going & (step == 0)]] = False
        q0[idx[going]] -= step[going]

    roots = _deduplicate(q0[converged], newton_opts.dedup)
    if roots.size == 0:
        raise NoRoots(f"no seed converged to x={x:.6g} (of {len(q0)} seeds)")
    return roots, _final_states(g, model, contour, roots, stepper, gamma_f)


def _deduplicate(roots, distance):
    kept = []
    for root in roots:
        if all(abs(root - other) >= distance for other in kept):
            kept.append(root)
    return np.asarray(kept, dtype=complex)


def root_search_reconstruct(g, model, contour, x, seeds, newton_opts=NewtonOptions(), stepper=StepperOptions(), gamma_f=0.5):
    """Psi(x, t) = sum over roots of exp(i S0), S0 with its quantum part."""
    _, final = find_roots(g, model, contour, x, seeds, newton_opts, stepper, gamma_f)
    return complex(np.sum(np.exp(1j * final.total_action())))


def root_search_grid(g, model, contour, x_grid, seeds, newton_opts=NewtonOptions(), stepper=StepperOptions(), gamma_f=0.5):
    """Root-search wavefunction on a grid; roots found at one x seed the next."""
    x_grid = np.asarray(x_grid, dtype=float)
    base = np.atleast_1d(np.asarray(seeds, dtype=complex))
    psi = np.zeros(len(x_grid), dtype=complex)
    counts = np.zeros(len(x_grid), dtype=np.int64)
    previous = np.empty(0, dtype=complex)
    for k, x in enumerate(x_grid):
        try:
            roots, final = find_roots(g, model, contour, x, np.concatenate([previous, base]), newton_opts, stepper, gamma_f)
        except NoRoots:
            previous = np.empty(0, dtype=complex)
            continue
        psi[k] = np.sum(np.exp(1j * final.total_action()))
        counts[k] = len(roots)
        previous = roots
    if not counts.any():
        raise NoRoots(f"no roots anywhere on the grid at t={contour.t_final:.6g}")
    logger.info(f"  Root search: {counts.min()}-{counts.max()} roots per point over {len(x_grid):,} points")
    return WavefunctionGrid(x_grid, psi, contour.t_final), counts


def taylor_continuation(record, x, time=None):
    """exp{i[S0 + (x-q)S1 + (x-q)^2 S2 / 2]} from each trajectory's end point."""
    state = record.final if time is None else record.checkpoint_at(time).state
    shift = np.asarray(x, dtype=complex) - state.qt
    with np.errstate(all="ignore"):
        exponent = state.total_action() + shift * state.pt + 0.5 * shift**2 * state.s2
        return np.where(state.valid, np.exp(1j * exponent), 0.0)


def taylor_reconstruct(record, x_grid, labels=None, time=None):
    """Continue from the trajectory landing nearest each x.

    With branch `labels`, the nearest trajectory of every branch contributes
    and the contributions are summed; label 0 is ignored.
    """
    state = record.final if time is None else record.checkpoint_at(time).state
    t = record.checkpoints[-1].time if time is None else float(time)
    x_grid = np.asarray(x_grid, dtype=float)
    valid = state.valid & np.isfinite(state.qt)
    if labels is None:
        groups = [np.nonzero(valid)[0]]
    else:
        labels = np.asarray(labels)
        groups = [np.nonzero(valid & (labels == b))[0] for b in np.unique(labels[labels > 0])]
    groups = [g for g in groups if g.size]
    if not groups:
        raise InputDomainError("no valid trajectory to continue from")

    psi = np.zeros(len(x_grid), dtype=complex)
    for members in groups:
        distance = np.abs(x_grid[:, None] - state.qt[None, members])
        nearest = members[np.argmin(distance, axis=1)]
        one = state.take(nearest)
        shift = x_grid - one.qt
        exponent = one.total_action() + shift * one.pt + 0.5 * shift**2 * one.s2
        psi += np.exp(1j * exponent)
    return WavefunctionGrid(x_grid, psi, t)


def branch_seeds(record, grid, threshold=DEFAULT_BRANCH_THRESHOLD, min_size=DEFAULT_MIN_BRANCH_SIZE, time=None):
    """One seed per branch: the initial point landing closest to the real axis."""
    labels, count = branch_labels(record, grid, threshold, min_size, time)
    state = record.final if time is None else record.checkpoint_at(time).state
    im_q = np.where(state.valid, np.abs(state.qt.imag), np.inf)
    seeds = []
    for b in range(1, count + 1):
        members = np.nonzero(labels == b)[0]
        seeds.append(grid.points[members[np.argmin(im_q[members])]])
    return np.asarray(seeds, dtype=complex)
