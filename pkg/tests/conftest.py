import numpy as np
import pytest

from finco.dynamics import InitialGaussian
from finco.potentials import classical_period, free_particle, harmonic, morse


def _free_gaussian(x, t, g):
    """Freely spreading Gaussian wavepacket, closed form."""
    spread = 1.0 + 2j * g.gamma0 * t
    return (
        (2 * g.gamma0 / np.pi) ** 0.25 / np.sqrt(spread)
        * np.exp(
            -g.gamma0 * (x - g.q0 - g.p0 * t) ** 2 / spread
            + 1j * g.p0 * (x - g.q0)
            - 0.5j * g.p0**2 * t
        )
    )


def _coherent_state(x, t, q0, p0=0.0):
    """omega = 1, gamma = 1/2 coherent state, including the zero-point phase."""
    qt = q0 * np.cos(t) + p0 * np.sin(t)
    pt = -q0 * np.sin(t) + p0 * np.cos(t)
    return np.pi**-0.25 * np.exp(
        -0.5 * (x - qt) ** 2 + 1j * pt * (x - qt) + 0.5j * (pt * qt - p0 * q0) - 0.5j * t
    )


@pytest.fixture
def morse_model():
    return morse()


@pytest.fixture
def harmonic_model():
    return harmonic(1.0)


@pytest.fixture
def free_model():
    return free_particle()


@pytest.fixture
def revival_gaussian():
    return InitialGaussian(0.5, 9.342, 0.0)


@pytest.fixture
def t_cl(morse_model, revival_gaussian):
    return classical_period(morse_model, revival_gaussian.q0)


@pytest.fixture
def free_gaussian():
    return _free_gaussian


@pytest.fixture
def coherent_state():
    return _coherent_state
