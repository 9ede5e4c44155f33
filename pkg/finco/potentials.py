"""
Analytic one-dimensional potentials evaluable at complex position.

Each model supplies V and its first two derivatives in closed form, which is
all the second-order trajectory equations need.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from finco.errors import InputDomainError

MAX_DERIVATIVE = 2

# Morse parameters used throughout the revival study (hartree, 1/bohr)
MORSE_D = 10.25
MORSE_BETA = 0.2209


class PotentialKind(str, enum.Enum):
    MORSE = "morse"
    HARMONIC = "harmonic"
    FREE = "free"


@dataclass(frozen=True)
class PotentialModel:
    """A potential family plus its parameters; immutable after construction."""

    kind: PotentialKind
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", PotentialKind(self.kind))
        required = {
            PotentialKind.MORSE: ("D", "beta"),
            PotentialKind.HARMONIC: ("omega",),
            PotentialKind.FREE: (),
        }[self.kind]
        missing = [name for name in required if name not in self.params]
        if missing:
            raise InputDomainError(f"{self.kind.value} potential needs {missing}")
        for name in required:
            if not math.isfinite(self.params[name]) or self.params[name] <= 0:
                raise InputDomainError(f"{self.kind.value} parameter {name} must be positive")

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    def derivatives(self, q):
        """V, V', V'' at q without input checks (scalar or array)."""
        q = np.asarray(q, dtype=complex)
        if self.kind is PotentialKind.MORSE:
            D, beta = self.params["D"], self.params["beta"]
            e1 = np.exp(-beta * q)
            e2 = e1 * e1
            return (
                D * (e2 - 2.0 * e1),
                D * (-2.0 * beta * e2 + 2.0 * beta * e1),
                D * (4.0 * beta**2 * e2 - 2.0 * beta**2 * e1),
            )
        if self.kind is PotentialKind.HARMONIC:
            w2 = self.params["omega"] ** 2
            return 0.5 * w2 * q * q, w2 * q, np.full_like(q, w2)
        zero = np.zeros_like(q)
        return zero, zero.copy(), zero.copy()

    def __call__(self, q):
        return self.derivatives(q)[0]


def morse(D=MORSE_D, beta=MORSE_BETA):
    return PotentialModel(PotentialKind.MORSE, {"D": D, "beta": beta})


def harmonic(omega=1.0):
    return PotentialModel(PotentialKind.HARMONIC, {"omega": omega})


def free_particle():
    return PotentialModel(PotentialKind.FREE, {})


def eval_derivs(model, q, n_max):
    """Return [V_0, ..., V_n_max] at complex q from the closed forms."""
    if not 0 <= n_max <= MAX_DERIVATIVE:
        raise InputDomainError(f"n_max must be in 0..{MAX_DERIVATIVE}, got {n_max}")
    if not np.all(np.isfinite(q)):
        raise InputDomainError(f"position must be finite, got {q}")
    values = model.derivatives(q)[: n_max + 1]
    if np.ndim(q) == 0:
        return [complex(v) for v in values]
    return list(values)


def morse_squared_form(model, q):
    """D[(1 - e^{-beta q})^2 - 1]; the textbook form of the same Morse curve."""
    D, beta = model.params["D"], model.params["beta"]
    return D * ((1.0 - np.exp(-beta * np.asarray(q, dtype=complex))) ** 2 - 1.0)


def classical_period(model, q0, p0=0.0):
    """Period of the real orbit launched from (q0, p0), in atomic units."""
    if model.kind is PotentialKind.HARMONIC:
        return 2.0 * math.pi / model.params["omega"]
    if model.kind is PotentialKind.MORSE:
        energy = float(np.real(model(q0))) + 0.5 * p0**2
        if energy >= 0.0:
            raise InputDomainError(f"orbit with E={energy:.6g} is unbound, no period")
        return 2.0 * math.pi / (model.params["beta"] * math.sqrt(2.0 * abs(energy)))
    raise InputDomainError("free particle motion has no classical period")


def morse_eigenvalue(model, n=0):
    """Exact bound-state energy E_n of the Morse oscillator (mass 1)."""
    D, beta = model.params["D"], model.params["beta"]
    omega0 = beta * math.sqrt(2.0 * D)
    return -D + omega0 * (n + 0.5) - 0.5 * beta**2 * (n + 0.5) ** 2
