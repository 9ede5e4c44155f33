import math

import numpy as np
import pytest

from finco.errors import InputDomainError
from finco.potentials import (
    PotentialKind,
    PotentialModel,
    classical_period,
    eval_derivs,
    free_particle,
    harmonic,
    morse,
    morse_eigenvalue,
    morse_squared_form,
)


def test_morse_minimum(morse_model):
    v0, v1, v2 = eval_derivs(morse_model, 0.0, 2)
    assert v0 == pytest.approx(-10.25)
    assert abs(v1) < 1e-14
    assert v2 == pytest.approx(2 * 10.25 * 0.2209**2)


def test_harmonic_force():
    v0, v1 = eval_derivs(harmonic(1.0), 1.0, 1)
    assert v0 == pytest.approx(0.5)
    # dp/dt = -V1 = -1
    assert -v1 == pytest.approx(-1.0)


def test_free_particle_is_flat():
    values = eval_derivs(free_particle(), 3.0 + 2.0j, 2)
    assert values == [0j, 0j, 0j]


def test_squared_form_matches(morse_model):
    q = np.array([0.5, 9.342, 3.0 + 1.5j, -1.0 - 0.7j])
    assert np.allclose(morse_squared_form(morse_model, q), morse_model(q), rtol=1e-13, atol=1e-12)


def test_derivatives_are_complex_derivatives(morse_model):
    q, h = 4.0 + 0.8j, 1e-5
    v0 = lambda z: eval_derivs(morse_model, z, 0)[0]
    v1 = lambda z: eval_derivs(morse_model, z, 1)[1]
    assert eval_derivs(morse_model, q, 1)[1] == pytest.approx((v0(q + h) - v0(q - h)) / (2 * h), rel=1e-8)
    assert eval_derivs(morse_model, q, 2)[2] == pytest.approx((v1(q + h) - v1(q - h)) / (2 * h), rel=1e-8)
    # holomorphic: the same derivative along the imaginary direction
    assert eval_derivs(morse_model, q, 1)[1] == pytest.approx((v0(q + 1j * h) - v0(q - 1j * h)) / (2j * h), rel=1e-8)


def test_eval_derivs_vectorized(morse_model):
    q = np.linspace(1.0, 5.0, 7) + 0.1j
    v0, v1 = eval_derivs(morse_model, q, 1)
    assert v0.shape == v1.shape == (7,)


@pytest.mark.parametrize("n_max", [-1, 3])
def test_eval_derivs_rejects_order(morse_model, n_max):
    with pytest.raises(InputDomainError):
        eval_derivs(morse_model, 1.0, n_max)


def test_eval_derivs_rejects_nonfinite(morse_model):
    with pytest.raises(InputDomainError):
        eval_derivs(morse_model, complex(np.nan, 0.0), 2)


def test_parameter_validation():
    with pytest.raises(InputDomainError):
        PotentialModel(PotentialKind.MORSE, {"D": -1.0, "beta": 0.2})
    with pytest.raises(InputDomainError):
        PotentialModel("harmonic", {})
    with pytest.raises(ValueError):
        PotentialModel("quartic", {})


def test_models_hash_by_value():
    assert hash(morse()) == hash(morse(10.25, 0.2209))
    assert morse() == morse(10.25, 0.2209)


def test_morse_classical_period(morse_model):
    t_cl = classical_period(morse_model, 9.342)
    assert 12.87 <= t_cl <= 12.89


def test_harmonic_period():
    assert classical_period(harmonic(2.0), 1.0) == pytest.approx(math.pi)


def test_period_errors(morse_model):
    with pytest.raises(InputDomainError):
        classical_period(free_particle(), 0.0)
    with pytest.raises(InputDomainError):
        classical_period(morse_model, -5.0)


def test_morse_ground_energy(morse_model):
    D, beta = 10.25, 0.2209
    omega0 = beta * math.sqrt(2 * D)
    assert morse_eigenvalue(morse_model, 0) == pytest.approx(-D + omega0 / 2 - beta**2 / 8)
    spacing = morse_eigenvalue(morse_model, 1) - morse_eigenvalue(morse_model, 0)
    assert spacing == pytest.approx(omega0 - beta**2)
