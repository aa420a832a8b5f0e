"""Free energy, molecular field and dissipation over grid fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import algebra
from .grid import (
    Grid,
    gradient,
    inner,
    laplacian,
    velocity_gradient_sq,
    velocity_inner,
)

__all__ = [
    "PotentialParams",
    "EnergyBreakdown",
    "compute_mu",
    "force_bound_constant",
    "bulk_force",
    "bulk_energy_density",
    "molecular_field_H",
    "elastic_energy",
    "phase_energy",
    "total_energy",
    "dissipation",
]


def _quartic_bound(r, a, b, c):
    return 0.5 * a * r**2 - abs(b) / 3.0 * r**3 + c / 8.0 * r**4


def compute_mu(a: float, b: float, c: float) -> float:
    """Smallest shift ``mu >= 0`` with ``F(Q) + mu >= c/8 |Q|^4`` for every ``Q``.

    Uses ``|Q^2:Q| <= |Q|^3`` to reduce to the scalar quartic
    ``g(r) = a/2 r^2 - |b|/3 r^3 + c/8 r^4`` and returns ``max(0, -min g)``;
    the minimum sits at ``r = 0`` or at a root of ``c/2 r^2 - |b| r + a``.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, got {c!r}")
    candidates = [0.0]
    disc = b * b - 2.0 * a * c
    if disc >= 0:
        sq = math.sqrt(disc)
        candidates += [(abs(b) + sq) / c, (abs(b) - sq) / c]
    gmin = min(_quartic_bound(r, a, b, c) for r in candidates if r >= 0)
    return max(0.0, -gmin)


@dataclass(frozen=True)
class PotentialParams:
    """Material constants; ``mu`` defaults to :func:`compute_mu`."""

    a: float = -1.0
    b: float = 0.0
    c: float = 1.0
    epsilon: float = 0.1
    nu: float = 1.0
    gamma: float = 1.0
    mu: float | None = field(default=None)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        for name in ("epsilon", "nu", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mu is None:
            object.__setattr__(self, "mu", compute_mu(self.a, self.b, self.c))
        elif self.mu < 0:
            raise ValueError("mu must be nonnegative")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("a", "b", "c", "epsilon", "nu", "gamma", "mu")}


def force_bound_constant(params: PotentialParams) -> float:
    """``C`` in ``|f(Q)| <= C (|Q| + |Q|^2 + |Q|^3)``."""
    return max(abs(params.a), abs(params.b), params.c)


def bulk_force(Q, params: PotentialParams, bulk: str = "f"):
    if bulk == "f":
        return algebra.bulk_force_f(Q, params)
    if bulk == "f_pz":
        return algebra.bulk_force_f_pz(Q, params)
    raise ValueError(f"unknown bulk force {bulk!r}")


def bulk_energy_density(Q, params: PotentialParams):
    """Shifted potential ``F(Q) + mu`` per cell."""
    return algebra.potential_F(Q, params) + params.mu


def molecular_field_H(grid: Grid, Q, params: PotentialParams, bulk: str = "f") -> np.ndarray:
    """``H = -eps lap Q + f(Q)`` with the Neumann/periodic cell Laplacian."""
    Q = grid.check_cells(Q, (3, 3))
    return -params.epsilon * laplacian(grid, Q, "neumann") + bulk_force(Q, params, bulk)


def elastic_energy(grid: Grid, Q, params: PotentialParams) -> float:
    """``eps/2 ||grad Q||^2`` with the compact face gradient."""
    total = 0.0
    for a, g in enumerate(gradient(grid, Q, "neumann")):
        w = grid.face_weights(a).reshape([-1 if i == a else 1 for i in range(g.ndim)])
        total += float(np.sum(g * g * w))
    return 0.5 * params.epsilon * total * grid.cell_volume


def phase_energy(grid: Grid, Q, params: PotentialParams) -> float:
    """Elastic plus shifted bulk energy of ``Q`` alone."""
    return elastic_energy(grid, Q, params) + float(np.sum(bulk_energy_density(Q, params))) * grid.cell_volume


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    elastic: float
    bulk: float
    total: float
    dissipation: float = float("nan")


def total_energy(grid: Grid, u, Q, params: PotentialParams, H=None) -> EnergyBreakdown:
    """Kinetic, elastic and bulk energy; dissipation is filled in when ``H`` is given."""
    Q = grid.check_cells(Q, (3, 3))
    u = grid.check_velocity(u)
    kin = 0.5 * velocity_inner(grid, u, u)
    el = elastic_energy(grid, Q, params)
    bu = float(np.sum(bulk_energy_density(Q, params))) * grid.cell_volume
    dis = dissipation(grid, u, H, params) if H is not None else float("nan")
    return EnergyBreakdown(kin, el, bu, kin + el + bu, dis)


def dissipation(grid: Grid, u, H, params: PotentialParams) -> float:
    """``nu ||grad u||^2 + gamma ||H||^2``."""
    u = grid.check_velocity(u)
    H = grid.check_cells(H, (3, 3))
    return params.nu * velocity_gradient_sq(grid, u) + params.gamma * inner(grid, H, H)
