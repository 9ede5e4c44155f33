"""
Run configuration: dataclass tree, TOML persistence, overrides and presets.

Times in the checkpoint list are either absolute or in units of the
classical period T_cl of the orbit launched from the wavepacket center;
`resolve_times` turns them into absolute times.
"""

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from finco.contour import DEFAULT_DIP_DEPTH, DEFAULT_DIP_FRACTION, ContourFamily
from finco.dynamics import InitialGaussian, StepperOptions
from finco.errors import ConfigError, FincoError
from finco.potentials import MORSE_BETA, MORSE_D, PotentialKind, PotentialModel, classical_period
from finco.reconstruction import DEFAULT_EPSILON, DEFAULT_NU, DEFAULT_SIGMA, PHASE_CONVENTIONS
from finco.reference_qm import DEFAULT_DT, DEFAULT_N, DEFAULT_X_MAX, DEFAULT_X_MIN, GridSpec

DEFAULT_GAMMA_F = 0.5
DEFAULT_Q0 = 9.342
DEFAULT_OUTPUT_DIR = "results"
REVIVAL_CHECKPOINTS = (0.5, 1.0, 4.0, 10.0, 19.0, 20.0)
TIME_UNITS = ("t_cl", "absolute")


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = "morse"
    D: float = MORSE_D
    beta: float = MORSE_BETA
    omega: float = 1.0

    def model(self):
        kind = PotentialKind(self.kind)
        params = {
            PotentialKind.MORSE: {"D": self.D, "beta": self.beta},
            PotentialKind.HARMONIC: {"omega": self.omega},
            PotentialKind.FREE: {},
        }[kind]
        return PotentialModel(kind, params)


@dataclass(frozen=True)
class GaussianConfig:
    gamma0: float = 0.5
    q0: float = DEFAULT_Q0
    p0: float = 0.0

    def gaussian(self):
        return InitialGaussian(self.gamma0, self.q0, self.p0)


@dataclass(frozen=True)
class ContourConfig:
    family: str = ContourFamily.MIDLINE.value
    dip_depth: float = DEFAULT_DIP_DEPTH
    dip_fraction: tuple = DEFAULT_DIP_FRACTION


@dataclass(frozen=True)
class ManifoldConfig:
    """Sampling rectangle as offsets from q0 along Re and Im q(t0)."""

    re_span: tuple = (-3.5, 4.5)
    im_span: tuple = (-3.5, 3.5)
    nx: int = 200
    ny: int = 175
    refine_rounds: int = 0
    refine_budget: int = 0


@dataclass(frozen=True)
class CheckpointConfig:
    times: tuple = REVIVAL_CHECKPOINTS
    units: str = "t_cl"


@dataclass(frozen=True)
class FilterConfig:
    sigma: float = DEFAULT_SIGMA
    nu: float = DEFAULT_NU
    eps: float = DEFAULT_EPSILON
    phase_convention: str = "contour"


@dataclass(frozen=True)
class StepperConfig:
    dt_max: float = 0.05
    atol: float = 1e-12
    rtol: float = 1e-10
    h_min: float = 1e-10

    def options(self):
        return StepperOptions(self.dt_max, self.atol, self.rtol, self.h_min)


@dataclass(frozen=True)
class ReferenceConfig:
    x_min: float = DEFAULT_X_MIN
    x_max: float = DEFAULT_X_MAX
    n: int = DEFAULT_N
    dt: float = DEFAULT_DT
    autocorrelation: bool = False

    def grid(self):
        return GridSpec(self.x_min, self.x_max, self.n, self.dt)


@dataclass(frozen=True)
class OutputConfig:
    """Directory plus the real x grid reconstructions are evaluated on."""

    directory: str = DEFAULT_OUTPUT_DIR
    # inner Morse turning point of the packet sits near -3; dx below the reference spacing
    x_min: float = -10.0
    x_max: float = 30.0
    n: int = 3201
    checkpoint_dump: bool = False


@dataclass(frozen=True)
class DiagnosticsConfig:
    branch_threshold: float = 0.05
    min_branch_size: int = 5
    caustic_threshold: float = 1e-3
    scar_jump: float = 0.5 * math.pi


@dataclass(frozen=True)
class RootSearchConfig:
    max_iter: int = 50
    tol: float = 1e-10
    x_stride: int = 4


@dataclass(frozen=True)
class RunConfig:
    name: str = "morse-revival"
    gamma_f: float = DEFAULT_GAMMA_F
    workers: int = 1
    chunk_size: int = 2000
    real_tol: float = 1e-6
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    gaussian: GaussianConfig = field(default_factory=GaussianConfig)
    contour: ContourConfig = field(default_factory=ContourConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    checkpoints: CheckpointConfig = field(default_factory=CheckpointConfig)
    filters: FilterConfig = field(default_factory=FilterConfig)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    rootsearch: RootSearchConfig = field(default_factory=RootSearchConfig)


# --- Dict / TOML conversion ---

def to_dict(config):
    """Plain nested dict (tuples as lists) suitable for TOML."""
    def plain(value):
        if dataclasses.is_dataclass(value):
            return {f.name: plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        return value
    return plain(config)


def _coerce(value, default, key):
    """Check `value` against the type of the field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list, got {value!r}")
        items = []
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{key}[{i}]", f"expected a number, got {item!r}")
            items.append(float(item))
        return tuple(items)
    return value


def _build(cls, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip("."), f"expected a table, got {data!r}")
    defaults = cls()
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}", "unknown key")
    values = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        key = f"{prefix}{name}"
        if dataclasses.is_dataclass(default):
            values[name] = _build(type(default), value, f"{key}.")
        else:
            values[name] = _coerce(value, default, key)
    return cls(**values)


def from_dict(data):
    config = _build(RunConfig, data)
    validate(config)
    return config


def dumps_config(config):
    return tomli_w.dumps(to_dict(config))


def loads_config(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("", f"invalid TOML: {e}") from e
    return from_dict(data)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError("", f"config file not found: {path}")
    return loads_config(path.read_text())


def dump_config(config, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(config))
    return path


# --- Overrides ---

def parse_override(text):
    """'a.b=value' -> (['a', 'b'], value); the value is read as a TOML literal."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key.path=value")
    key, raw = (part.strip() for part in text.split("=", 1))
    if not key:
        raise ConfigError(text, "override has an empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(config, overrides):
    data = to_dict(config)
    for text in overrides:
        path, value = parse_override(text)
        node = data
        for i, part in enumerate(path[:-1]):
            if not isinstance(node.get(part), dict):
                raise ConfigError(".".join(path[: i + 1]), "unknown section")
            node = node[part]
        if path[-1] not in node:
            raise ConfigError(".".join(path), "unknown key")
        node[path[-1]] = value
    return from_dict(data)


# --- Validation and derived quantities ---

def validate(config):
    """Raise ConfigError naming the first entry no module would accept."""
    checks = [
        ("potential", lambda: config.potential.model()),
        ("gaussian", lambda: config.gaussian.gaussian()),
        ("reference", lambda: config.reference.grid()),
    ]
    for key, build in checks:
        try:
            build()
        except (FincoError, ValueError) as e:
            raise ConfigError(key, str(e)) from e
    if config.gamma_f <= 0:
        raise ConfigError("gamma_f", "must be positive")
    if config.contour.family not in {f.value for f in ContourFamily}:
        raise ConfigError("contour.family", f"must be one of {[f.value for f in ContourFamily]}")
    if len(config.contour.dip_fraction) != 2 or not 0 <= config.contour.dip_fraction[0] < config.contour.dip_fraction[1] <= 1:
        raise ConfigError("contour.dip_fraction", "must be [start, end] with 0 <= start < end <= 1")
    if config.contour.dip_depth < 0:
        raise ConfigError("contour.dip_depth", "must be non-negative")
    if config.contour.family == ContourFamily.MIDLINE.value and config.potential.kind != PotentialKind.MORSE.value:
        raise ConfigError("contour.family", "midline contours need a Morse potential")
    manifold = config.manifold
    for key in ("re_span", "im_span"):
        span = getattr(manifold, key)
        if len(span) != 2 or not span[1] > span[0]:
            raise ConfigError(f"manifold.{key}", "must be [low, high] with high > low")
    if manifold.nx < 1 or manifold.ny < 1:
        raise ConfigError("manifold.nx", "grid resolution must be at least 1x1")
    if manifold.refine_rounds < 0 or manifold.refine_budget < 0:
        raise ConfigError("manifold.refine_rounds", "refinement settings must be non-negative")
    if config.checkpoints.units not in TIME_UNITS:
        raise ConfigError("checkpoints.units", f"must be one of {list(TIME_UNITS)}")
    if not config.checkpoints.times:
        raise ConfigError("checkpoints.times", "need at least one checkpoint")
    if min(config.checkpoints.times) < 0:
        raise ConfigError("checkpoints.times", "times must be non-negative")
    if config.filters.phase_convention not in PHASE_CONVENTIONS:
        raise ConfigError("filters.phase_convention", f"must be one of {list(PHASE_CONVENTIONS)}")
    if config.stepper.dt_max <= 0:
        raise ConfigError("stepper.dt_max", "must be positive")
    if config.output.n < 2 or not config.output.x_max > config.output.x_min:
        raise ConfigError("output", "x grid needs n >= 2 and x_max > x_min")
    if config.workers < 0:
        raise ConfigError("workers", "must be >= 0 (0 = all cores)")
    if config.chunk_size < 1:
        raise ConfigError("chunk_size", "must be positive")
    if config.rootsearch.x_stride < 1:
        raise ConfigError("rootsearch.x_stride", "must be positive")
    resolve_times(config)
    return config


def classical_period_of(config):
    """T_cl of the central orbit, or None when the potential has none."""
    model = config.potential.model()
    if model.kind is PotentialKind.FREE:
        return None
    try:
        return classical_period(model, config.gaussian.q0, config.gaussian.p0)
    except FincoError:
        return None


def resolve_times(config):
    """(T_cl or None, sorted absolute checkpoint times)."""
    t_cl = classical_period_of(config)
    times = config.checkpoints.times
    if config.checkpoints.units == "t_cl":
        if t_cl is None:
            raise ConfigError("checkpoints.units", "no classical period for this orbit; use absolute times")
        times = tuple(t * t_cl for t in times)
    return t_cl, tuple(sorted(set(times)))


# --- Presets ---

def _morse_revival():
    return RunConfig(
        name="morse-revival",
        manifold=ManifoldConfig(nx=400, ny=300),
        output=OutputConfig(directory=f"{DEFAULT_OUTPUT_DIR}/morse-revival"),
    )


def _morse_short():
    return RunConfig(
        name="morse-short",
        manifold=ManifoldConfig(nx=200, ny=100),
        checkpoints=CheckpointConfig(times=(0.5, 1.0)),
        output=OutputConfig(directory=f"{DEFAULT_OUTPUT_DIR}/morse-short"),
    )


def _morse_branches():
    return RunConfig(
        name="morse-branches",
        manifold=ManifoldConfig(nx=400, ny=350),
        checkpoints=CheckpointConfig(times=(1.0, 2.0, 3.0)),
        output=OutputConfig(directory=f"{DEFAULT_OUTPUT_DIR}/morse-branches"),
    )


def _harmonic_check():
    return RunConfig(
        name="harmonic-check",
        potential=PotentialConfig(kind="harmonic", omega=1.0),
        gaussian=GaussianConfig(gamma0=0.5, q0=2.0, p0=0.0),
        contour=ContourConfig(family=ContourFamily.REAL.value),
        manifold=ManifoldConfig(re_span=(-4.0, 4.0), im_span=(-4.0, 4.0), nx=100, ny=100),
        checkpoints=CheckpointConfig(times=(0.5 * math.pi, math.pi, 2.0 * math.pi), units="absolute"),
        reference=ReferenceConfig(x_min=-20.0, x_max=20.0, n=1024, dt=0.001),
        output=OutputConfig(directory=f"{DEFAULT_OUTPUT_DIR}/harmonic-check", x_min=-6.0, x_max=6.0, n=241),
    )


def _identity():
    return RunConfig(
        name="identity",
        manifold=ManifoldConfig(nx=100, ny=100),
        checkpoints=CheckpointConfig(times=(0.0,), units="absolute"),
        output=OutputConfig(directory=f"{DEFAULT_OUTPUT_DIR}/identity", x_min=4.0, x_max=15.0, n=221),
    )


def _free_particle():
    return RunConfig(
        name="free-particle",
        potential=PotentialConfig(kind="free"),
        gaussian=GaussianConfig(gamma0=0.5, q0=0.0, p0=1.0),
        contour=ContourConfig(family=ContourFamily.RECTANGULAR_DIP.value),
        manifold=ManifoldConfig(re_span=(-4.0, 4.0), im_span=(-4.0, 4.0), nx=100, ny=100),
        checkpoints=CheckpointConfig(times=(1.0, 2.0), units="absolute"),
        reference=ReferenceConfig(x_min=-20.0, x_max=30.0, n=2048, dt=0.01),
        output=OutputConfig(directory=f"{DEFAULT_OUTPUT_DIR}/free-particle", x_min=-6.0, x_max=10.0, n=321),
    )


PRESETS = {
    "morse-revival": _morse_revival,
    "morse-short": _morse_short,
    "morse-branches": _morse_branches,
    "harmonic-check": _harmonic_check,
    "identity": _identity,
    "free-particle": _free_particle,
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]()
