"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Every key has a default (see :data:`DEFAULTS`), unknown keys are rejected.

=================== =============== =============================================
key                 default         meaning
=================== =============== =============================================
dims                32x32           cells per axis, ``NxM`` or ``NxMxK``
h                   auto            cell width; ``auto`` is ``1/dims[0]``
bc                  box             ``box`` (no-slip + Neumann) or ``periodic``
a, b, c             -1, 0, 1        bulk potential coefficients
epsilon             0.1             elastic constant
nu                  1               viscosity
gamma               1               relaxation rate
mu                  auto            coercivity shift; ``auto`` = smallest valid
dt                  0.005           time step
t_end               1               final time
stretching          full            ``full`` or ``antisym``
bulk                f               ``f`` or ``f_pz`` (trace-free force)
splitting           convex_split    ``convex_split`` or ``semi_implicit``
stabilization       auto            convex-split constant; ``auto`` from data
projection_tol      1e-10           relative divergence tolerance
project_q           false           project Q onto symmetric traceless each step
poisson_method      auto            ``auto``, ``direct``, ``fft`` or ``cg``
snapshots           10              snapshot files written (evenly spaced)
out                 out             output directory
seed                0               seed for random initial data
init                random          ``random``, ``uniaxial`` or ``zero``
init_amplitude      1               scale of random entries
init_max_norm       1               pointwise cap on ``|Q|``; ``none`` disables
init_s              1               uniaxial order; ``equilibrium`` solves for it
init_director       0,0,1           uniaxial director
threshold_u         1e-8            convergence: final ``||u||``
threshold_residual  1e-6            convergence: ``||-eps lap Q + f(Q)||``
threshold_cauchy    1e-8            convergence: snapshot increments
threshold_gap       1e-10           convergence: ``|E(Q) - E_inf| / (1+|E_inf|)``
=================== =============== =============================================
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .dynamics import StepperConfig
from .energy import PotentialParams
from .equilibrium import Thresholds
from .grid import Grid, make_grid

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "parse_config", "load_config", "uniaxial_equilibrium_s"]


class ConfigError(ValueError):
    pass


def _dims(v: str):
    parts = v.replace(",", "x").split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"dims: expected NxM or NxMxK, got {v!r}") from None
    if len(dims) not in (2, 3) or min(dims) < 1:
        raise ConfigError(f"dims: expected 2 or 3 positive sizes, got {v!r}")
    return dims


def _opt_float(v: str, token: str):
    return None if v.lower() == token else float(v)


def _choice(*options):
    def parse(v):
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return v
    return parse


def _vector(v: str):
    vec = tuple(float(x) for x in v.split(","))
    if len(vec) != 3:
        raise ConfigError(f"expected three comma-separated numbers, got {v!r}")
    return vec


def _bool(v: str):
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected true or false, got {v!r}")


def _init_s(v: str):
    return v if v == "equilibrium" else float(v)


_PARSERS = {
    "dims": _dims,
    "h": lambda v: _opt_float(v, "auto"),
    "bc": _choice("box", "periodic"),
    "a": float,
    "b": float,
    "c": float,
    "epsilon": float,
    "nu": float,
    "gamma": float,
    "mu": lambda v: _opt_float(v, "auto"),
    "dt": float,
    "t_end": float,
    "stretching": _choice("full", "antisym"),
    "bulk": _choice("f", "f_pz"),
    "splitting": _choice("convex_split", "semi_implicit"),
    "stabilization": lambda v: _opt_float(v, "auto"),
    "projection_tol": float,
    "project_q": _bool,
    "poisson_method": _choice("auto", "direct", "fft", "cg"),
    "snapshots": int,
    "out": str,
    "seed": int,
    "init": _choice("random", "uniaxial", "zero"),
    "init_amplitude": float,
    "init_max_norm": lambda v: _opt_float(v, "none"),
    "init_s": _init_s,
    "init_director": _vector,
    "threshold_u": float,
    "threshold_residual": float,
    "threshold_cauchy": float,
    "threshold_gap": float,
}


@dataclass(frozen=True)
class RunConfig:
    dims: tuple = (32, 32)
    h: float | None = None
    bc: str = "box"
    a: float = -1.0
    b: float = 0.0
    c: float = 1.0
    epsilon: float = 0.1
    nu: float = 1.0
    gamma: float = 1.0
    mu: float | None = None
    dt: float = 0.005
    t_end: float = 1.0
    stretching: str = "full"
    bulk: str = "f"
    splitting: str = "convex_split"
    stabilization: float | None = None
    projection_tol: float = 1e-10
    project_q: bool = False
    poisson_method: str = "auto"
    snapshots: int = 10
    out: str = "out"
    seed: int = 0
    init: str = "random"
    init_amplitude: float = 1.0
    init_max_norm: float | None = 1.0
    init_s: float | str = 1.0
    init_director: tuple = (0.0, 0.0, 1.0)
    threshold_u: float = 1e-8
    threshold_residual: float = 1e-6
    threshold_cauchy: float = 1e-8
    threshold_gap: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_end >= 0:
            raise ConfigError("t_end must be nonnegative")
        if self.snapshots < 0:
            raise ConfigError("snapshots must be nonnegative")
        if self.h is not None and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.c <= 0 or self.epsilon <= 0 or self.nu <= 0 or self.gamma <= 0:
            raise ConfigError("c, epsilon, nu and gamma must be positive")

    def grid(self) -> Grid:
        return make_grid(self.dims, self.h, self.bc)

    def params(self) -> PotentialParams:
        return PotentialParams(a=self.a, b=self.b, c=self.c, epsilon=self.epsilon,
                               nu=self.nu, gamma=self.gamma, mu=self.mu)

    def stepper(self, flow: bool = True) -> StepperConfig:
        return StepperConfig(
            dt=self.dt, params=self.params(), stretching=self.stretching, bulk=self.bulk,
            splitting=self.splitting, projection_tol=self.projection_tol,
            stabilization=self.stabilization, flow=flow, project_q=self.project_q,
            poisson_method=self.poisson_method,
        )

    def thresholds(self) -> Thresholds:
        return Thresholds(self.threshold_u, self.threshold_residual, self.threshold_cauchy, self.threshold_gap)

    def effective(self) -> dict:
        """All keys with defaults resolved (``mu`` and ``h`` made explicit)."""
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["init_director"] = list(self.init_director)
        d["h"] = self.grid().spacing[0]
        d["mu"] = self.params().mu
        if self.init == "uniaxial":
            d["init_s"] = self.resolved_s()
        return d

    def resolved_s(self) -> float:
        if self.init_s == "equilibrium":
            return uniaxial_equilibrium_s(self.a, self.b, self.c)
        return float(self.init_s)


DEFAULTS = {f.name: f.default for f in fields(RunConfig)}


def uniaxial_equilibrium_s(a: float, b: float, c: float) -> float:
    """Largest nonzero root of ``a - b s/3 + 2c s^2/3 = 0``.

    For ``Q = s(nn - I/3)`` the trace-free bulk force is
    ``(a - b s/3 + 2c s^2/3) Q``, so these roots are the homogeneous
    uniaxial critical points.
    """
    disc = b * b / 9.0 - 8.0 * a * c / 3.0
    if disc < 0:
        raise ConfigError("no nonzero uniaxial critical point for these coefficients")
    roots = [(b / 3.0 + sgn * math.sqrt(disc)) / (4.0 * c / 3.0) for sgn in (1.0, -1.0)]
    return max(roots, key=abs)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
        except ValueError:
            raise ConfigError(f"line {lineno}: {key}: cannot parse {value!r}") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        return RunConfig(**values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: dict | None = None) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)
