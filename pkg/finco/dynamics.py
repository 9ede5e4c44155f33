"""
Complexified classical trajectories with second-order action expansion.

Every trajectory carries its position and momentum, the classical and kinetic
action, the (P_z, Z) linearization of the second action derivative and the
2x2 monodromy matrix. Batches of trajectories are stepped together by an
adaptive Dormand-Prince 5(4) integrator along a complex time contour; each
trajectory keeps its own step size.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from finco.contour import segment_steps
from finco.errors import InputDomainError, TrajectoryFlag

logger = logging.getLogger(__name__)

N_COMPONENTS = 10
Q, P, S0, SKIN, PZ, Z, MPP, MPQ, MQP, MQQ = range(N_COMPONENTS)

# Dormand-Prince 5(4) tableau
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = _A[6] + (0.0,)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_PHASE_GUARD = 0.5 * math.pi


@dataclass(frozen=True)
class InitialGaussian:
    """Normalized Gaussian (2g/pi)^(1/4) exp(-g(x-q0)^2 + i p0 (x-q0))."""

    gamma0: float = 0.5
    q0: float = 9.342
    p0: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise InputDomainError(f"gamma0 must be positive, got {self.gamma0}")

    @property
    def s2(self):
        return 2j * self.gamma0

    def amplitude(self, x):
        x = np.asarray(x, dtype=float)
        return (2 * self.gamma0 / np.pi) ** 0.25 * np.exp(
            -self.gamma0 * (x - self.q0) ** 2 + 1j * self.p0 * (x - self.q0)
        )


@dataclass(frozen=True)
class StepperOptions:
    dt_max: float = 0.05
    atol: float = 1e-12
    rtol: float = 1e-10
    h_min: float = 1e-10
    overflow: float = 1e100


@dataclass
class TrajectoryState:
    """State of a batch of trajectories; every field has leading length n."""

    qt: np.ndarray
    pt: np.ndarray
    s0_cl: np.ndarray
    s_kin: np.ndarray
    pz: np.ndarray
    z: np.ndarray
    m: np.ndarray  # (n, 2, 2): [[M_pp, M_pq], [M_qp, M_qq]]
    arg_d: np.ndarray
    arg_z: np.ndarray
    flags: np.ndarray

    def __len__(self):
        return len(self.qt)

    @property
    def s2(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.pz / self.z

    @property
    def det_m(self):
        m = self.m
        return m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]

    @property
    def valid(self):
        return self.flags == 0

    def d_value(self, gamma_f):
        """D = 2 gamma_f Z - i P_z, the caustic function of the final bra manifold."""
        return 2.0 * gamma_f * self.z - 1j * self.pz

    def quantum_action(self):
        """(i/2) ln Z with the contour-unwrapped phase of Z."""
        return 0.5j * (np.log(np.abs(self.z)) + 1j * self.arg_z)

    def total_action(self):
        return self.s0_cl + self.quantum_action()

    def take(self, index):
        index = np.atleast_1d(index)
        return TrajectoryState(
            *(getattr(self, name)[index] for name in _STATE_FIELDS)
        )

    def vector(self):
        y = np.empty((len(self), N_COMPONENTS), dtype=complex)
        y[:, Q], y[:, P], y[:, S0], y[:, SKIN] = self.qt, self.pt, self.s0_cl, self.s_kin
        y[:, PZ], y[:, Z] = self.pz, self.z
        y[:, MPP:] = self.m.reshape(len(self), 4)
        return y

    @classmethod
    def from_vector(cls, y, arg_d, arg_z, flags):
        return cls(
            qt=y[:, Q].copy(), pt=y[:, P].copy(), s0_cl=y[:, S0].copy(),
            s_kin=y[:, SKIN].copy(), pz=y[:, PZ].copy(), z=y[:, Z].copy(),
            m=y[:, MPP:].reshape(-1, 2, 2).copy(),
            arg_d=np.array(arg_d, dtype=float), arg_z=np.array(arg_z, dtype=float),
            flags=np.array(flags, dtype=np.int64),
        )

    @classmethod
    def concat(cls, states):
        return cls(*(np.concatenate([getattr(s, name) for s in states]) for name in _STATE_FIELDS))


_STATE_FIELDS = ("qt", "pt", "s0_cl", "s_kin", "pz", "z", "m", "arg_d", "arg_z", "flags")


@dataclass
class Checkpoint:
    """Snapshot on the real axis plus extrema along the path that reached it.

    `re_v` is Re V(q(t)) at the checkpoint itself.
    """

    time: float
    state: TrajectoryState
    re_v: np.ndarray
    min_re_v: np.ndarray
    max_im_q: np.ndarray
    min_abs_d: np.ndarray

    def take(self, index):
        return Checkpoint(
            self.time, self.state.take(index), self.re_v[index],
            self.min_re_v[index], self.max_im_q[index], self.min_abs_d[index],
        )

    @classmethod
    def concat(cls, parts):
        arrays = ("re_v", "min_re_v", "max_im_q", "min_abs_d")
        return cls(
            parts[0].time,
            TrajectoryState.concat([p.state for p in parts]),
            *(np.concatenate([getattr(p, name) for p in parts]) for name in arrays),
        )


@dataclass
class TrajectoryRecord:
    q0_tilde: np.ndarray
    s2_t0: np.ndarray
    contour: object
    gamma_f: float
    checkpoints: list
    final: TrajectoryState
    max_im_q: np.ndarray
    min_re_v: np.ndarray
    min_abs_d: np.ndarray
    rejections: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.q0_tilde)

    @property
    def times(self):
        return [c.time for c in self.checkpoints]

    def checkpoint_at(self, t):
        for checkpoint in self.checkpoints:
            if abs(checkpoint.time - t) <= 1e-9 * max(1.0, abs(t)):
                return checkpoint
        raise KeyError(f"no checkpoint at t={t}; available {self.times}")

    def take(self, index):
        index = np.atleast_1d(index)
        return TrajectoryRecord(
            q0_tilde=self.q0_tilde[index], s2_t0=self.s2_t0[index],
            contour=self.contour, gamma_f=self.gamma_f,
            checkpoints=[c.take(index) for c in self.checkpoints],
            final=self.final.take(index),
            max_im_q=self.max_im_q[index], min_re_v=self.min_re_v[index],
            min_abs_d=self.min_abs_d[index], rejections=self.rejections[index],
        )

    @classmethod
    def concat(cls, records):
        first = records[0]
        checkpoints = [
            Checkpoint.concat([r.checkpoints[k] for r in records]) for k in range(len(first.checkpoints))
        ]
        return cls(
            q0_tilde=np.concatenate([r.q0_tilde for r in records]),
            s2_t0=np.concatenate([r.s2_t0 for r in records]),
            contour=first.contour, gamma_f=first.gamma_f, checkpoints=checkpoints,
            final=TrajectoryState.concat([r.final for r in records]),
            max_im_q=np.concatenate([r.max_im_q for r in records]),
            min_re_v=np.concatenate([r.min_re_v for r in records]),
            min_abs_d=np.concatenate([r.min_abs_d for r in records]),
            rejections=np.concatenate([r.rejections for r in records]),
        )


def init_from_gaussian(g, q0_tilde, gamma_f):
    """Initial trajectory states on the complex manifold of a Gaussian wavefunction."""
    q = np.atleast_1d(np.asarray(q0_tilde, dtype=complex))
    n = len(q)
    u = q - g.q0
    s0 = 1j * g.gamma0 * u**2 + g.p0 * u - 0.25j * np.log(2 * g.gamma0 / np.pi)
    pz = np.full(n, g.s2)
    z = np.ones(n, dtype=complex)
    d = 2.0 * gamma_f * z - 1j * pz
    return TrajectoryState(
        qt=q.copy(), pt=2j * g.gamma0 * u + g.p0, s0_cl=s0,
        s_kin=np.zeros(n, dtype=complex), pz=pz, z=z,
        m=np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy(),
        arg_d=np.angle(d), arg_z=np.zeros(n),
        flags=np.zeros(n, dtype=np.int64),
    )


def _rhs(y, model):
    """Time derivative of the packed state vector."""
    v0, v1, v2 = model.derivatives(y[:, Q])
    p = y[:, P]
    dy = np.empty_like(y)
    dy[:, Q] = p
    dy[:, P] = -v1
    dy[:, SKIN] = 0.5 * p * p
    dy[:, S0] = dy[:, SKIN] - v0
    dy[:, PZ] = -v2 * y[:, Z]
    dy[:, Z] = y[:, PZ]
    # d/dt [[Mpp, Mpq], [Mqp, Mqq]] = [[0, -V2], [1, 0]] M
    dy[:, MPP] = -v2 * y[:, MQP]
    dy[:, MPQ] = -v2 * y[:, MQQ]
    dy[:, MQP] = y[:, MPP]
    dy[:, MQQ] = y[:, MPQ]
    return dy


def derivative(state, model, gamma_f):
    """Time derivative of every ODE component, as a state-shaped object.

    arg_d carries the instantaneous rate Im(dD/dt / D); the stepper does not
    integrate it but unwraps D directly.
    """
    dy = _rhs(state.vector(), model)
    rates = TrajectoryState.from_vector(dy, np.zeros(len(state)), np.zeros(len(state)), state.flags)
    d_dot = 2.0 * gamma_f * dy[:, Z] - 1j * dy[:, PZ]
    with np.errstate(divide="ignore", invalid="ignore"):
        rates.arg_d = np.imag(d_dot / state.d_value(gamma_f))
        rates.arg_z = np.imag(dy[:, Z] / state.z)
    return rates


def _dp_step(y, scale, model):
    """One Dormand-Prince step of length `scale` (complex, per row)."""
    k = [None] * 7
    k[0] = _rhs(y, model) * scale
    for i in range(1, 7):
        stage = y.copy()
        for j, a in enumerate(_A[i]):
            if a:
                stage += a * k[j]
        k[i] = _rhs(stage, model) * scale
    y_new = y.copy()
    for b, ki in zip(_B5, k):
        if b:
            y_new += b * ki
    err = sum(e * ki for e, ki in zip(_E, k) if e)
    return y_new, err, k[0]


class _Diagnostics:
    """Running extrema along the contour."""

    def __init__(self, y, d, model):
        self.max_im_q = np.abs(y[:, Q].imag)
        with np.errstate(all="ignore"):
            self.min_re_v = np.real(model(y[:, Q]))
        self.min_abs_d = np.abs(d)

    def update(self, idx, q, d, model):
        np.maximum.at(self.max_im_q, idx, np.abs(q.imag))
        np.minimum.at(self.min_re_v, idx, np.real(model(q)))
        np.minimum.at(self.min_abs_d, idx, np.abs(d))

    def copy(self):
        twin = object.__new__(_Diagnostics)
        twin.max_im_q = self.max_im_q.copy()
        twin.min_re_v = self.min_re_v.copy()
        twin.min_abs_d = self.min_abs_d.copy()
        return twin


def _advance(y, arg_d, arg_z, flags, h_abs, rejections, dt, model, gamma_f, opts, diags):
    """Integrate every unflagged row across one macro step dt (complex, per row)."""
    dt = np.broadcast_to(np.asarray(dt, dtype=complex), (len(y),))
    length = np.abs(dt)
    s = np.where(length > 0, 0.0, 1.0)
    todo = flags == 0
    while True:
        idx = np.nonzero(todo & (s < 1.0))[0]
        if idx.size == 0:
            return
        remaining = 1.0 - s[idx]
        h = np.minimum(h_abs[idx] / length[idx], remaining)
        finishing = remaining - h <= 1e-12
        h = np.where(finishing, remaining, h)

        y0 = y[idx]
        with np.errstate(all="ignore"):
            y_new, err_vec, k0 = _dp_step(y0, (dt[idx] * h)[:, None], model)
            scale = opts.atol + opts.rtol * np.maximum(np.abs(y0), np.abs(y_new))
            err = np.sqrt(np.mean(np.abs(err_vec / scale) ** 2, axis=1))

        blown = ~np.all(np.isfinite(k0), axis=1) | (np.max(np.abs(y0), axis=1) > opts.overflow)
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(err)
        ok = finite & (err <= 1.0)

        d_old = 2.0 * gamma_f * y0[:, Z] - 1j * y0[:, PZ]
        d_new = 2.0 * gamma_f * y_new[:, Z] - 1j * y_new[:, PZ]
        with np.errstate(all="ignore"):
            dphi_d = np.angle(d_new / d_old)
            dphi_z = np.angle(y_new[:, Z] / y0[:, Z])
        phase_ok = (np.abs(dphi_d) < _PHASE_GUARD) & (np.abs(dphi_z) < _PHASE_GUARD)
        accept = ok & phase_ok & ~blown

        with np.errstate(all="ignore"):
            factor = np.clip(0.9 * err ** -0.2, 0.2, 5.0)
        factor = np.where(finite, factor, 0.25)
        factor = np.where(ok & ~phase_ok, 0.5, factor)
        factor = np.where(~accept, np.minimum(factor, 0.9), factor)
        proposed = h * length[idx] * factor
        # a truncated last substep says nothing about the step size the dynamics allow
        proposed = np.where(accept & finishing, np.maximum(proposed, h_abs[idx]), proposed)
        h_abs[idx] = np.minimum(proposed, opts.dt_max)

        good = idx[accept]
        y[good] = y_new[accept]
        arg_d[good] += dphi_d[accept]
        arg_z[good] += dphi_z[accept]
        s[good] = np.where(finishing[accept], 1.0, s[good] + h[accept])
        rejections[idx[~accept]] += 1
        with np.errstate(all="ignore"):
            diags.update(good, y_new[accept, Q], d_new[accept], model)

        over = idx[accept & (np.max(np.abs(y_new), axis=1) > opts.overflow)]
        flags[idx[blown]] |= TrajectoryFlag.NONFINITE
        flags[over] |= TrajectoryFlag.NONFINITE
        collapsed = idx[~accept & ~blown & (h_abs[idx] < opts.h_min)]
        flags[collapsed] |= TrajectoryFlag.STEP_COLLAPSE
        todo[idx[blown]] = False
        todo[over] = False
        todo[collapsed] = False


def _walk(y, arg_d, arg_z, flags, h_abs, rejections, start, end, model, gamma_f, opts, diags):
    """Integrate every row along the straight leg start -> end (per-row complex times)."""
    n, dt = segment_steps(start, end, opts.dt_max)
    for _ in range(n):
        _advance(y, arg_d, arg_z, flags, h_abs, rejections, dt, model, gamma_f, opts, diags)


def propagate(state0, contour, model, opts=StepperOptions(), gamma_f=0.5, checkpoints=(), q0_tilde=None, s2_t0=None):
    """Propagate a batch of trajectories along `contour` to its real end time.

    `contour` is a TimeContour (shared by every row) or a MidlineContour (one
    path per row). Each positive checkpoint is reached along its own spur off
    the main path and the main path carries on from the branch point, so a
    trajectory flagged on a spur stays usable for later times. The final
    state is always stored as the last checkpoint. Trajectories that overflow
    or whose step size collapses keep their last state and carry the
    matching flag.
    """
    times = sorted({float(t) for t in checkpoints} | {contour.t_final})
    plan = contour.paths(state0.qt, state0.pt, model, times)

    y = state0.vector()
    arg_d = state0.arg_d.astype(float).copy()
    arg_z = state0.arg_z.astype(float).copy()
    flags = state0.flags.astype(np.int64).copy()
    n = len(y)
    h_abs = np.full(n, opts.dt_max)
    rejections = np.zeros(n, dtype=np.int64)
    running = _Diagnostics(y, 2.0 * gamma_f * y[:, Z] - 1j * y[:, PZ], model)
    snapshots = []

    def snapshot(t, y, arg_d, arg_z, flags, diags):
        state = TrajectoryState.from_vector(y, arg_d, arg_z, flags)
        with np.errstate(all="ignore"):
            re_v = np.real(model(state.qt))
        snapshots.append(Checkpoint(
            t, state, re_v, diags.min_re_v.copy(), diags.max_im_q.copy(), diags.min_abs_d.copy(),
        ))

    if 0.0 in times:
        snapshot(0.0, y, arg_d, arg_z, flags, running)
    main = plan.main
    for j in range(main.shape[1]):
        if j:
            _walk(y, arg_d, arg_z, flags, h_abs, rejections, main[:, j - 1], main[:, j], model, gamma_f, opts, running)
        for t in plan.spurs_at(j):
            spur = (y.copy(), arg_d.copy(), arg_z.copy(), flags.copy(), h_abs.copy())
            diags = running.copy()
            _walk(*spur, rejections, main[:, j], np.full(n, complex(t)), model, gamma_f, opts, diags)
            snapshot(t, *spur[:4], diags)

    if q0_tilde is None:
        q0_tilde = state0.qt
    if s2_t0 is None:
        s2_t0 = state0.pz / state0.z
    last = snapshots[-1]
    return TrajectoryRecord(
        q0_tilde=np.asarray(q0_tilde, dtype=complex).copy(),
        s2_t0=np.asarray(s2_t0, dtype=complex).copy(),
        contour=contour, gamma_f=gamma_f, checkpoints=snapshots,
        final=last.state,
        max_im_q=last.max_im_q.copy(), min_re_v=last.min_re_v.copy(),
        min_abs_d=last.min_abs_d.copy(), rejections=rejections,
    )


def _propagate_chunk(args):
    g, points, contour, model, opts, gamma_f, checkpoints = args
    state0 = init_from_gaussian(g, points, gamma_f)
    return propagate(state0, contour, model, opts, gamma_f, checkpoints)


def propagate_manifold(g, points, contour, model, opts, gamma_f, checkpoints=(), chunk_size=2000, workers=1):
    """Propagate initial manifold points in fixed-size chunks, optionally on a process pool.

    Chunk boundaries depend only on `chunk_size`, so results do not depend on
    the number of workers.
    """
    points = np.asarray(points, dtype=complex)
    chunks = [points[i:i + chunk_size] for i in range(0, len(points), chunk_size)]
    jobs = [(g, chunk, contour, model, opts, gamma_f, tuple(checkpoints)) for chunk in chunks]
    total = len(jobs)
    logger.info(f"Propagating {len(points):,} trajectories in {total} chunks (t_final={contour.t_final:.6g})")

    results = []
    if workers == 1 or total <= 1:
        mapped = map(_propagate_chunk, jobs)
        for i, record in enumerate(mapped, 1):
            results.append(record)
            _log_chunk(i, total, record)
    else:
        with ProcessPoolExecutor(max_workers=workers or os.cpu_count()) as pool:
            for i, record in enumerate(pool.map(_propagate_chunk, jobs), 1):
                results.append(record)
                _log_chunk(i, total, record)
    return TrajectoryRecord.concat(results)


def initial_record(g, points, model, gamma_f):
    """Record holding only the t = 0 states; used when nothing needs propagating."""
    state = init_from_gaussian(g, points, gamma_f)
    d = state.d_value(gamma_f)
    with np.errstate(all="ignore"):
        re_v = np.real(model(state.qt))
    snapshot = Checkpoint(0.0, state, re_v, re_v.copy(), np.abs(state.qt.imag), np.abs(d))
    return TrajectoryRecord(
        q0_tilde=state.qt.copy(), s2_t0=state.s2.copy(), contour=None, gamma_f=gamma_f,
        checkpoints=[snapshot], final=state,
        max_im_q=snapshot.max_im_q.copy(), min_re_v=re_v.copy(), min_abs_d=snapshot.min_abs_d.copy(),
        rejections=np.zeros(len(state), dtype=np.int64),
    )


def _log_chunk(i, total, record):
    bad = int(np.count_nonzero(record.final.flags))
    logger.info(f"  Chunk {i}/{total}: {len(record):,} trajectories, {bad:,} flagged")


def ggwpd_variables(state):
    """Equivalent generalized Gaussian wavepacket variables (c, alpha) = (i S_0, -(i/2) S_2)."""
    return 1j * state.total_action(), -0.5j * state.s2

