"""
Final-value coherent-state reconstruction.

Each propagated trajectory is mapped to a real-centered Gaussian by the
Huber-Heller bra transform; its coefficient is the semiclassical coherent
state overlap times the Jacobian of the map from final phase space to the
initial complex manifold. Summing the weighted Gaussians gives Psi(x, t).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from finco.errors import EmptyReconstruction, InputDomainError, TrajectoryFlag

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = -2.5
DEFAULT_NU = -20.0
DEFAULT_EPSILON = 1e4

PHASE_CONVENTIONS = ("contour", "principal")

# (1/2pi) dp_f dq_f; the 1/(2 gamma_f) of the measure lives in jacobian_magnitude
GLOBAL_CONSTANT = 1.0 / (2.0 * np.pi)


@dataclass
class FincoSample:
    """Reconstruction payload for a batch of trajectories at one time."""

    qf: np.ndarray
    pf: np.ndarray
    weight: np.ndarray
    contribution: np.ndarray
    jac_mag: np.ndarray
    sigma_exp: np.ndarray
    d: np.ndarray
    flags: np.ndarray
    time: float = 0.0
    gamma_f: float = 0.5

    def __len__(self):
        return len(self.qf)

    @property
    def valid(self):
        return self.flags == 0

    def select(self, mask):
        """Copy in which samples outside `mask` are zero-weighted (order preserved)."""
        mask = np.asarray(mask, dtype=bool)
        weight = np.where(mask, self.weight, 0.0)
        return replace(self, weight=weight)

    def counts(self):
        """Total, accepted, and rejected-by-reason sample counts."""
        flags = self.flags.astype(np.int64)
        counts = {"total": len(self), "accepted": int(np.count_nonzero(flags == 0))}
        for flag in TrajectoryFlag:
            if flag:
                counts[flag.name.lower()] = int(np.count_nonzero(flags & int(flag)))
        return counts


@dataclass
class WavefunctionGrid:
    x: np.ndarray
    psi: np.ndarray
    t_final: float
    norm: float = field(default=None)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.x.ndim != 1 or len(self.x) < 2:
            raise InputDomainError("wavefunction grid needs at least two points")
        dx = np.diff(self.x)
        if np.any(dx <= 0) or not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
            raise InputDomainError("wavefunction grid must be uniform and strictly increasing")
        if self.norm is None:
            self.norm = float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def density(self):
        return np.abs(self.psi) ** 2


def hh_transform(q, p, gamma_f):
    """Real Gaussian center (q_f, p_f) with 2g q_f - i p_f = 2g q - i p."""
    if not gamma_f > 0:
        raise InputDomainError(f"gamma_f must be positive, got {gamma_f}")
    q = np.asarray(q, dtype=complex)
    p = np.asarray(p, dtype=complex)
    qf = q.real + p.imag / (2.0 * gamma_f)
    pf = p.real - 2.0 * gamma_f * q.imag
    return qf, pf


def caustic_function(final, s2_t0, gamma_f):
    """D = 2g(M_qq + M_qp S2(t0)) - i(M_pq + M_pp S2(t0))."""
    m = final.m
    s2 = np.asarray(s2_t0, dtype=complex)
    return 2.0 * gamma_f * (m[:, 1, 1] + m[:, 1, 0] * s2) - 1j * (m[:, 0, 1] + m[:, 0, 0] * s2)


def jacobian_magnitude(final, s2_t0, gamma_f):
    """|J| = |D|^2 / (2 gamma_f), the measure dp_f dq_f per unit initial area."""
    return np.abs(caustic_function(final, s2_t0, gamma_f)) ** 2 / (2.0 * gamma_f)


def sample_weight(final, g, gamma_f, dA, s2_t0=None, phase_convention="contour", time=0.0):
    """FINCO coefficients for a batch of final states.

    The square root of D is taken as |D|^{1/2} exp(i arg_d / 2) with arg_d
    unwrapped along the contour; `phase_convention="principal"` uses the
    principal branch instead.
    """
    if phase_convention not in PHASE_CONVENTIONS:
        raise InputDomainError(f"unknown phase convention {phase_convention!r}")
    s2 = g.s2 if s2_t0 is None else s2_t0
    d = caustic_function(final, s2, gamma_f)
    jac = np.abs(d) ** 2 / (2.0 * gamma_f)
    qf, pf = hh_transform(final.qt, final.pt, gamma_f)
    q, p = final.qt, final.pt
    sigma = 1j * final.s0_cl + gamma_f * (qf**2 - q**2) + 1j * (p * qf - pf * q)

    with np.errstate(all="ignore"):
        if phase_convention == "contour":
            inv_root = np.abs(d) ** -0.5 * np.exp(-0.5j * final.arg_d)
        else:
            inv_root = 1.0 / np.sqrt(d)
        overlap = (2.0 * gamma_f / np.pi) ** 0.25 * np.sqrt(2.0 * np.pi) * inv_root * np.exp(sigma)
        # |D|^2 |D|^{-1/2} vanishes at caustics
        contribution = np.where(np.abs(d) > 0, jac * overlap, 0.0)

    flags = final.flags.astype(np.int64).copy()
    flags[~np.isfinite(contribution) | ~np.isfinite(qf) | ~np.isfinite(pf)] |= TrajectoryFlag.NONFINITE
    contribution = np.where(flags == 0, contribution, 0.0)
    weight = GLOBAL_CONSTANT * np.asarray(dA) * contribution
    return FincoSample(
        qf=np.where(np.isfinite(qf), qf, 0.0), pf=np.where(np.isfinite(pf), pf, 0.0),
        weight=weight, contribution=contribution, jac_mag=jac, sigma_exp=sigma,
        d=d, flags=flags, time=float(time), gamma_f=float(gamma_f),
    )


def apply_filters(checkpoint, sample, sigma_thresh=DEFAULT_SIGMA, nu_thresh=DEFAULT_NU, eps_thresh=DEFAULT_EPSILON):
    """Zero the weight of samples failing the kinetic-action, potential or noise limits.

    The potential limit tests Re V(q(t)) at the checkpoint time itself: a
    trajectory is dropped only while it sits in the divergent region.
    """
    flags = sample.flags.astype(np.int64).copy()
    flags[np.imag(checkpoint.state.s_kin) < sigma_thresh] |= TrajectoryFlag.KINETIC_ACTION
    flags[np.asarray(checkpoint.re_v) < nu_thresh] |= TrajectoryFlag.POTENTIAL_DIVERGENCE
    flags[np.abs(sample.contribution) >= eps_thresh] |= TrajectoryFlag.NOISE
    keep = flags == 0
    return replace(
        sample,
        flags=flags,
        weight=np.where(keep, sample.weight, 0.0),
        contribution=np.where(keep, sample.contribution, 0.0),
    )


def reconstruct(samples, x_grid, gamma_f, chunk_size=1024):
    """Psi(x) = sum_k w_k <x|g_f(q_k, p_k)>, summed in sample order."""
    if abs(samples.gamma_f - gamma_f) > 1e-12:
        raise InputDomainError(f"samples built with gamma_f={samples.gamma_f}, asked for {gamma_f}")
    keep = np.nonzero(samples.valid & (samples.weight != 0))[0]
    if keep.size == 0:
        raise EmptyReconstruction(f"no valid samples at t={samples.time:.6g}")

    x = np.asarray(x_grid, dtype=float)
    qf, pf, w = samples.qf[keep], samples.pf[keep], samples.weight[keep]
    norm = (2.0 * gamma_f / np.pi) ** 0.25
    psi = np.zeros(x.size, dtype=complex)
    for start in range(0, keep.size, chunk_size):
        sl = slice(start, start + chunk_size)
        dx = x[:, None] - qf[None, sl]
        gauss = np.exp(-gamma_f * dx**2 + 1j * pf[None, sl] * dx)
        psi += np.sum(gauss * w[None, sl], axis=1)
    return WavefunctionGrid(x, norm * psi, samples.time)


def compare_densities(approx, reference):
    """L2, L-infinity and norm figures of |Psi|^2 against a reference wavefunction."""
    ref_density = np.interp(approx.x, reference.x, reference.density)
    diff = approx.density - ref_density
    dx = approx.dx
    ref_norm = float(np.sum(ref_density) * dx)
    l2 = float(np.sqrt(np.sum(diff**2) * dx))
    return {
        "time": approx.t_final,
        "l2": l2,
        "l2_relative": l2 / float(np.sqrt(np.sum(ref_density**2) * dx)),
        "linf": float(np.max(np.abs(diff))),
        "norm": approx.norm,
        "reference_norm": ref_norm,
    }


def density_minima(wf, threshold=0.05):
    """Positions of interior local minima of |Psi|^2 where it exceeds threshold*max."""
    rho = wf.density
    inside = rho > threshold * rho.max()
    interior = (rho[1:-1] < rho[:-2]) & (rho[1:-1] <= rho[2:])
    # a node only counts between two significant lobes
    left = np.maximum.accumulate(np.where(inside, rho, 0.0))
    right = np.maximum.accumulate(np.where(inside, rho, 0.0)[::-1])[::-1]
    flanked = (left[1:-1] > threshold * rho.max()) & (right[1:-1] > threshold * rho.max())
    lobe_gap = rho[1:-1] < 0.5 * np.minimum(left[1:-1], right[1:-1])
    return wf.x[1:-1][interior & flanked & lobe_gap]
