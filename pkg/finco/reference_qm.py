"""
Grid-based quantum propagation by split-operator Fourier stepping.

Strang splitting e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2} on a periodic grid,
kinetic factor applied in momentum space. Used as the exact reference for
every semiclassical reconstruction, and in imaginary time to relax onto the
ground state.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import fft

from finco.dynamics import InitialGaussian
from finco.errors import InputDomainError
from finco.reconstruction import WavefunctionGrid

logger = logging.getLogger(__name__)

# Default Morse grid: bound motion around q0 = 9.342 for twenty periods
DEFAULT_X_MIN = -12.0
DEFAULT_X_MAX = 50.0
DEFAULT_N = 4096
DEFAULT_DT = 0.005

INITIAL_EDGE_LIMIT = 1e-12
LEAKAGE_LIMIT = 1e-6
EDGE_POINTS = 8


@dataclass(frozen=True)
class GridSpec:
    x_min: float = DEFAULT_X_MIN
    x_max: float = DEFAULT_X_MAX
    n: int = DEFAULT_N
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise InputDomainError(f"x_max must exceed x_min, got [{self.x_min}, {self.x_max}]")
        if self.n < 2 or self.n & (self.n - 1):
            raise InputDomainError(f"grid size must be a power of two, got {self.n}")
        if not self.dt > 0:
            raise InputDomainError(f"dt must be positive, got {self.dt}")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self):
        return 2.0 * np.pi * fft.fftfreq(self.n, d=self.dx)


class SplitOperator:
    """Strang-split propagator for a fixed step; real or imaginary time."""

    def __init__(self, model, spec, dt, imaginary=False):
        self.spec = spec
        self.dt = dt
        self.imaginary = imaginary
        self.v = np.real(model(spec.x))
        kinetic = 0.5 * spec.k**2
        if imaginary:
            self._half_v = np.exp(-0.5 * dt * self.v)
            self._kin = np.exp(-dt * kinetic)
        else:
            self._half_v = np.exp(-0.5j * dt * self.v)
            self._kin = np.exp(-1j * dt * kinetic)

    def step(self, psi, n_steps=1):
        """Advance psi by n_steps; adjacent half potential kicks are merged."""
        if n_steps <= 0:
            return psi
        psi = psi * self._half_v
        full_v = self._half_v * self._half_v
        for k in range(n_steps):
            psi = fft.ifft(fft.fft(psi) * self._kin)
            psi = psi * (full_v if k < n_steps - 1 else self._half_v)
            if self.imaginary:
                psi = psi / math.sqrt(norm(psi, self.spec.dx))
        return psi

    def energy(self, psi):
        """<psi|H|psi> / <psi|psi>."""
        dx = self.spec.dx
        weight = norm(psi, dx)
        potential = np.sum(self.v * np.abs(psi) ** 2) * dx
        # Parseval: sum |psi_k|^2 = n sum |psi_x|^2
        kinetic = np.sum(0.5 * self.spec.k**2 * np.abs(fft.fft(psi)) ** 2) * dx / self.spec.n
        return float((potential + kinetic) / weight)


def norm(psi, dx):
    return float(np.sum(np.abs(psi) ** 2) * dx)


def _steps_between(t_start, t_end, dt):
    """Uniform step count and length landing exactly on t_end."""
    span = t_end - t_start
    n = max(1, math.ceil(span / dt - 1e-9))
    return n, span / n


def _check_contained(psi, where):
    edge = max(np.abs(psi[:EDGE_POINTS]).max(), np.abs(psi[-EDGE_POINTS:]).max())
    if edge > LEAKAGE_LIMIT:
        logger.warning(f"[WARNING] Boundary leakage at {where}: |psi| = {edge:.3e} at the grid edge")
    return edge


def initial_state(g, spec):
    """Sampled initial Gaussian, after checking it fits in the grid."""
    psi = g.amplitude(spec.x).astype(complex)
    edge = max(np.abs(psi[0]), np.abs(psi[-1]))
    if edge >= INITIAL_EDGE_LIMIT:
        raise InputDomainError(
            f"initial Gaussian not contained in [{spec.x_min}, {spec.x_max}]: |psi| = {edge:.3e} at the boundary"
        )
    return psi


def propagate_exact(g, model, spec=GridSpec(), t_final=None, checkpoints=()):
    """Wavefunctions at each checkpoint time (t_final alone if none are given)."""
    times = sorted({float(t) for t in checkpoints})
    if t_final is not None and not times:
        times = [float(t_final)]
    if not times:
        raise InputDomainError("need t_final or at least one checkpoint")
    if times[0] < 0:
        raise InputDomainError(f"checkpoint times must be non-negative, got {times[0]}")

    psi = initial_state(g, spec)
    norm0 = norm(psi, spec.dx)
    logger.info(f"Split-operator propagation on {spec.n:,} points to t={times[-1]:.6g}")
    results = []
    t = 0.0
    for target in times:
        if target > t:
            n, h = _steps_between(t, target, spec.dt)
            psi = SplitOperator(model, spec, h).step(psi, n)
            t = target
        _check_contained(psi, f"t={t:.6g}")
        results.append(WavefunctionGrid(spec.x, psi.copy(), t))
        logger.debug(f"  t={t:.6g}: norm drift {results[-1].norm - norm0:+.3e}")
    logger.info(f"[OK] Reference wavefunctions at {len(results)} times")
    return results


def autocorrelation(g, model, spec=GridSpec(), t_final=1.0, every=10):
    """<Psi(0)|Psi(t)> sampled every `every` steps up to t_final, as a table."""
    psi0 = initial_state(g, spec)
    n, h = _steps_between(0.0, t_final, spec.dt)
    stepper = SplitOperator(model, spec, h)
    rows = []
    psi = psi0
    done = 0
    while True:
        overlap = complex(np.sum(np.conj(psi0) * psi) * spec.dx)
        rows.append({"time": done * h, "re": overlap.real, "im": overlap.imag, "abs": abs(overlap)})
        if done >= n:
            break
        chunk = min(every, n - done)
        psi = stepper.step(psi, chunk)
        done += chunk
    _check_contained(psi, f"t={t_final:.6g}")
    return pd.DataFrame(rows)


def revival_time(table, t_min=0.0):
    """Time of the largest |<Psi(0)|Psi(t)>| after t_min."""
    later = table[table["time"] > t_min]
    if later.empty:
        raise InputDomainError(f"no autocorrelation samples after t={t_min}")
    return float(later.loc[later["abs"].idxmax(), "time"])


def relax_ground_state(model, spec=GridSpec(), guess=None, tau_max=60.0, tol=1e-12, check_every=100):
    """Imaginary-time relaxation; returns (ground state, energy).

    Stops once the energy changes by less than `tol` between checks.
    """
    if guess is None:
        guess = InitialGaussian(0.5, 0.0, 0.0)
    psi = guess.amplitude(spec.x).astype(complex)
    psi /= math.sqrt(norm(psi, spec.dx))
    stepper = SplitOperator(model, spec, spec.dt, imaginary=True)
    energy = stepper.energy(psi)
    tau = 0.0
    while tau < tau_max:
        psi = stepper.step(psi, check_every)
        tau += check_every * spec.dt
        previous, energy = energy, stepper.energy(psi)
        if abs(energy - previous) < tol:
            logger.debug(f"Relaxation converged at tau={tau:.4g}, E={energy:.12f}")
            break
    else:
        logger.warning(f"[WARNING] Relaxation not converged by tau={tau_max}: last change {energy - previous:.3e}")
    return WavefunctionGrid(spec.x, psi, 0.0), energy
