"""First-order coupled time stepping with a per-step energy ledger.

One step, given ``(u^n, Q^n)`` and ``H^n = H(Q^n)``:

1. flow: implicit viscosity, explicit convection and elastic force
   (assembled from ``Q^n, H^n`` as the exact adjoint of the transport and
   stretching terms), followed by a Chorin projection;
2. order parameter: transport and stretching with ``u^{n+1}``, implicit
   Laplacian, bulk force explicit (``semi_implicit``) or stabilised with an
   implicit quadratic term (``convex_split``);
3. ledger row for the new state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from . import algebra
from .energy import (
    EnergyBreakdown,
    PotentialParams,
    bulk_force,
    dissipation,
    molecular_field_H,
    total_energy,
)
from .grid import (
    Grid,
    HelmholtzSolver,
    advect,
    advect_dual,
    cell_velocity_gradient,
    cell_velocity_gradient_adjoint,
    convection,
    l2_norm,
    project,
    velocity_divergence,
    velocity_norm,
    zero_velocity,
)

__all__ = [
    "StepperConfig",
    "SimState",
    "LedgerRow",
    "EnergyLedger",
    "InstabilityError",
    "ProjectionError",
    "stabilization_constant",
    "elastic_force",
    "step_q",
    "step_flow",
    "coupled_step",
    "run",
    "trace_drift",
    "symmetry_drift",
]

# Relative slack allowed when flagging a ledger row as monotone.
MONOTONE_RTOL = 1e-14


class InstabilityError(RuntimeError):
    def __init__(self, message: str, dt: float, step: int, ledger: "EnergyLedger"):
        super().__init__(message)
        self.dt = dt
        self.step = step
        self.ledger = ledger


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    params: PotentialParams = field(default_factory=PotentialParams)
    stretching: str = "full"
    bulk: str = "f"
    splitting: str = "convex_split"
    projection_tol: float = 1e-10
    stabilization: float | None = None
    flow: bool = True
    project_q: bool = False
    poisson_method: str = "auto"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.stretching not in algebra.STRETCHING_VARIANTS:
            raise ValueError(f"stretching must be one of {algebra.STRETCHING_VARIANTS}")
        if self.bulk not in ("f", "f_pz"):
            raise ValueError("bulk must be 'f' or 'f_pz'")
        if self.splitting not in ("semi_implicit", "convex_split"):
            raise ValueError("splitting must be 'semi_implicit' or 'convex_split'")

    def as_dict(self) -> dict:
        return {
            "dt": self.dt,
            "stretching": self.stretching,
            "bulk": self.bulk,
            "splitting": self.splitting,
            "projection_tol": self.projection_tol,
            "stabilization": self.stabilization,
            "flow": self.flow,
            "project_q": self.project_q,
            **self.params.as_dict(),
        }


@dataclass(frozen=True, eq=False)
class SimState:
    grid: Grid
    u: tuple
    p: np.ndarray
    Q: np.ndarray
    t: float = 0.0
    step: int = 0
    H: np.ndarray | None = None

    @classmethod
    def initial(cls, grid: Grid, Q, u=None, t: float = 0.0) -> "SimState":
        Q = grid.check_cells(Q, (3, 3)).copy()
        u = zero_velocity(grid) if u is None else tuple(np.array(x, dtype=float) for x in grid.check_velocity(u))
        return cls(grid, u, np.zeros(grid.dims), Q, float(t), 0)


@dataclass(frozen=True)
class LedgerRow:
    t: float
    kinetic: float
    elastic: float
    bulk: float
    total: float
    dissipation: float
    law_residual: float
    monotone: bool


class EnergyLedger:
    """Per-step energy bookkeeping; rows describe the state after each step."""

    COLUMNS = ("t", "kinetic", "elastic", "bulk", "total", "dissipation", "law_residual", "monotone")

    def __init__(self, rows: Iterable[LedgerRow] = ()):
        self.rows: list[LedgerRow] = list(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def append(self, row: LedgerRow) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        if name not in self.COLUMNS:
            raise KeyError(name)
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                vals = [repr(float(getattr(r, c))) for c in self.COLUMNS[:-1]]
                fh.write(",".join(vals + [str(int(r.monotone))]) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EnergyLedger":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls.COLUMNS:
                raise ValueError(f"unexpected ledger header {header}")
            rows = []
            for line in fh:
                if not line.strip():
                    continue
                vals = line.strip().split(",")
                nums = [float(v) for v in vals[:-1]]
                rows.append(LedgerRow(*nums, bool(int(vals[-1]))))
        return cls(rows)


def stabilization_constant(params: PotentialParams, qmax: float, margin: float = 1.1) -> float:
    """Half the largest Hessian eigenvalue of ``F`` on the ball ``|Q| <= R``.

    ``R`` is ``margin`` times the larger of ``qmax`` and the radius beyond
    which the bulk force points inwards, so the quadratic splitting is
    energy stable as long as the solution stays in that ball.
    """
    a, b, c = params.a, abs(params.b), params.c
    r_plus = 0.0
    disc = b * b - 4.0 * a * c
    if disc >= 0:
        r_plus = max(0.0, (b + math.sqrt(disc)) / (2.0 * c))
    R = margin * max(qmax, r_plus)
    lam = a + 2.0 * b * R + 3.0 * c * R * R
    return max(0.0, 0.5 * lam)


@lru_cache(maxsize=64)
def _solver(grid: Grid, alpha: float, kind, shift: float = 1.0) -> HelmholtzSolver:
    return HelmholtzSolver(grid, alpha, kind, shift)


def _kappa(config: StepperConfig, Q) -> float:
    if config.splitting == "semi_implicit":
        return 0.0
    if config.stabilization is not None:
        return float(config.stabilization)
    return stabilization_constant(config.params, float(np.max(algebra.norm(Q))))


def resolve(config: StepperConfig, Q) -> StepperConfig:
    """Freeze the stabilisation constant from the data so solver factorisations can be reused."""
    if config.splitting == "convex_split" and config.stabilization is None:
        return replace(config, stabilization=_kappa(config, Q))
    return config


def elastic_force(grid: Grid, Q, H, stretching: str = "full") -> tuple:
    """Face force whose work on any ``u`` equals ``<(u.grad)Q, H> - <S(grad u, Q), H>``."""
    T = advect_dual(grid, Q, H)
    V = cell_velocity_gradient_adjoint(grid, algebra.stretching_dual(H, Q, stretching))
    return tuple(T[k] - V[k] for k in range(grid.ndim))


def _has_flow(u) -> bool:
    return any(np.any(x) for x in u)


def step_q(state: SimState, config: StepperConfig, u=None) -> np.ndarray:
    """Advance ``Q`` one step with velocity ``u`` (default: the state's)."""
    grid = state.grid
    u = state.u if u is None else u
    P = config.params
    dt = config.dt
    Q = state.Q
    rhs = Q.copy()
    if _has_flow(u):
        G = cell_velocity_gradient(grid, u)
        rhs -= dt * (advect(grid, u, Q) - algebra.stretching_S(G, Q, config.stretching))
    kappa = _kappa(config, Q)
    rhs -= dt * P.gamma * (bulk_force(Q, P, config.bulk) - kappa * Q)
    solver = _solver(grid, dt * P.gamma * P.epsilon, "neumann", 1.0 + dt * P.gamma * kappa)
    Qn = solver.solve(rhs)
    if config.project_q:
        Qn = algebra.deviator(algebra.sym(Qn))
    return Qn


def step_flow(state: SimState, force, config: StepperConfig):
    """Projection step for the momentum equation; returns ``(u, p)``."""
    grid = state.grid
    P = config.params
    dt = config.dt
    conv = convection(grid, state.u)
    ustar = []
    for k in range(grid.ndim):
        rhs = state.u[k] + dt * (force[k] - conv[k])
        solver = _solver(grid, dt * P.nu, ("velocity", k))
        ustar.append(solver.solve(rhs))
    ustar = tuple(ustar)
    unew, p = project(grid, ustar, dt, config.poisson_method)
    div = l2_norm(grid, velocity_divergence(grid, unew))
    scale = velocity_norm(grid, ustar) / min(grid.spacing)
    if div > config.projection_tol * scale + 1e-300:
        raise ProjectionError(f"divergence {div:.3e} after projection exceeds tolerance")
    return unew, p


def _breakdown(state: SimState, config: StepperConfig) -> tuple[EnergyBreakdown, np.ndarray]:
    H = state.H if state.H is not None else molecular_field_H(state.grid, state.Q, config.params, config.bulk)
    return total_energy(state.grid, state.u, state.Q, config.params, H), H


def coupled_step(state: SimState, config: StepperConfig, ledger: EnergyLedger | None = None,
                 previous: EnergyBreakdown | None = None) -> SimState:
    """One Gauss-Seidel step: flow with ``Q^n``, then ``Q`` with ``u^{n+1}``."""
    grid = state.grid
    P = config.params
    if previous is None or state.H is None:
        previous, H = _breakdown(state, config)
    else:
        H = state.H
    if config.flow:
        force = elastic_force(grid, state.Q, H, config.stretching)
        u, p = step_flow(state, force, config)
    else:
        u, p = zero_velocity(grid), np.zeros(grid.dims)
    Qn = step_q(state, config, u)
    Hn = molecular_field_H(grid, Qn, P, config.bulk)
    new = SimState(grid, u, p, Qn, state.t + config.dt, state.step + 1, Hn)
    if ledger is not None:
        e = total_energy(grid, u, Qn, P, Hn)
        residual = (e.total - previous.total) / config.dt + e.dissipation
        monotone = e.total <= previous.total + MONOTONE_RTOL * abs(previous.total)
        ledger.append(LedgerRow(new.t, e.kinetic, e.elastic, e.bulk, e.total, e.dissipation, residual, monotone))
    return new


def trace_drift(Q) -> float:
    return float(np.max(np.abs(np.trace(Q, axis1=-2, axis2=-1))))


def symmetry_drift(Q) -> float:
    return float(np.max(algebra.norm(Q - algebra.transpose(Q))))


def run(initial: SimState, config: StepperConfig, t_end: float,
        callbacks: Sequence[Callable[[SimState], None]] = (), every: int = 1,
        detect_instability: bool = True) -> tuple[SimState, EnergyLedger]:
    """Integrate to ``t_end``; callbacks fire every ``every`` steps and at the end.

    Raises :class:`InstabilityError` when the total energy grows by more than
    1% over 10 consecutive steps or stops being finite.
    """
    if t_end < initial.t:
        raise ValueError("t_end precedes the initial time")
    ledger = EnergyLedger()
    span = t_end - initial.t
    nsteps = math.ceil(span / config.dt - 1e-9) if span > 0 else 0
    if nsteps == 0:
        return initial, ledger

    config = resolve(config, initial.Q)
    state = initial
    if config.flow and _has_flow(state.u):
        u, _ = project(state.grid, state.u, 1.0, config.poisson_method)
        state = replace(state, u=u)
    elif not config.flow:
        state = replace(state, u=zero_velocity(state.grid))
    previous, H = _breakdown(state, config)
    state = replace(state, H=H)
    totals = [previous.total]
    t0 = initial.t
    for n in range(nsteps):
        dt_n = min(config.dt, t_end - (t0 + n * config.dt))
        cfg = config if abs(dt_n - config.dt) <= 1e-9 * config.dt else replace(config, dt=dt_n)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                state = coupled_step(state, cfg, ledger, previous)
        except ProjectionError as exc:
            if not detect_instability:
                raise
            raise InstabilityError(
                f"projection failed at step {state.step + 1} ({exc}); "
                f"dt={config.dt!r} is above the stability threshold",
                config.dt, state.step + 1, ledger,
            ) from exc
        state = replace(state, t=t0 + n * config.dt + cfg.dt)
        row = ledger.rows[-1]
        previous = EnergyBreakdown(row.kinetic, row.elastic, row.bulk, row.total, row.dissipation)
        totals.append(row.total)
        if detect_instability:
            if not math.isfinite(row.total) or (
                len(totals) > 10 and totals[-1] > 1.01 * totals[-11]
            ):
                raise InstabilityError(
                    f"total energy grew by more than 1% over 10 steps at step {state.step} "
                    f"(t={state.t:.6g}); dt={config.dt!r} is above the stability threshold",
                    config.dt, state.step, ledger,
                )
        if callbacks and ((n + 1) % every == 0 or n + 1 == nsteps):
            for cb in callbacks:
                cb(state)
    return state, ledger
