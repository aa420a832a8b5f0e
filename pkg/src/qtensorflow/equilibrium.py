"""Long-time diagnostics for relaxing trajectories."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .energy import PotentialParams, molecular_field_H, phase_energy
from .grid import Grid, l2_norm, poisson_solve, velocity_norm

__all__ = [
    "Thresholds",
    "EquilibriumReport",
    "DecayFit",
    "DegenerateFitError",
    "critical_point_residual",
    "snapshot_increments",
    "cauchy_certificate",
    "estimate_e_infinity",
    "lojasiewicz_fit",
    "omega_limit_check",
]


class DegenerateFitError(ValueError):
    """The fitted window touches the limit energy, so ``log(E - E_inf)`` is undefined."""


@dataclass(frozen=True)
class Thresholds:
    u_norm: float = 1e-8
    critical_residual: float = 1e-6
    cauchy: float = 1e-8
    energy_gap_rel: float = 1e-10


def critical_point_residual(grid: Grid, Q, params: PotentialParams, bulk: str = "f") -> float:
    """``||-eps lap Q + f(Q)||`` in discrete L2; zero exactly on the critical set."""
    return l2_norm(grid, molecular_field_H(grid, Q, params, bulk))


def _hminus1_norm(grid: Grid, D) -> float:
    D = np.asarray(D, dtype=float)
    cols = D.reshape(grid.ncells, -1)
    mean = cols.mean(axis=0)
    zero_mean = (cols - mean).reshape(D.shape)
    phi = poisson_solve(grid, zero_mean)
    sq = -float(np.sum(phi * zero_mean)) * grid.cell_volume + float(np.sum(mean**2)) * grid.volume
    return math.sqrt(max(sq, 0.0))


def snapshot_increments(snapshots: Sequence, grid: Grid | None = None, norm: str = "l2") -> np.ndarray:
    """Norms of consecutive differences ``Q(t_{i+1}) - Q(t_i)``."""
    fields = [np.asarray(s) for s in snapshots]
    out = []
    for a, b in zip(fields[:-1], fields[1:]):
        d = b - a
        if norm == "l2":
            vol = grid.cell_volume if grid is not None else 1.0
            out.append(math.sqrt(float(np.sum(d * d)) * vol))
        elif norm == "hminus1":
            if grid is None:
                raise ValueError("the H^-1 norm needs the grid")
            out.append(_hminus1_norm(grid, d))
        else:
            raise ValueError(f"unknown norm {norm!r}")
    return np.array(out)


def cauchy_certificate(snapshots: Sequence, grid: Grid | None = None, tail: int = 3,
                       norm: str = "l2") -> float:
    """Largest increment between consecutive snapshots among the last ``tail`` ones."""
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    tail = max(2, min(tail, len(snapshots)))
    return float(np.max(snapshot_increments(list(snapshots)[-tail:], grid, norm)))


def estimate_e_infinity(totals, fraction: float = 0.1) -> float:
    """Median of the final ``fraction`` of the total-energy column."""
    totals = np.asarray(totals, dtype=float)
    if totals.size == 0:
        raise ValueError("empty ledger")
    k = max(1, int(math.ceil(fraction * totals.size)))
    return float(np.median(totals[-k:]))


@dataclass(frozen=True)
class DecayFit:
    kind: str  # "exponential" or "power"
    theta: float  # 0.5 for exponential decay
    rate: float  # exponential rate or power-law exponent beta
    r_squared: float
    r_squared_exponential: float
    r_squared_power: float


def _r2(y, yhat) -> float:
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef, _r2(y, A @ coef)


def lojasiewicz_fit(times, totals, e_infinity: float, r2_exponential: float = 0.99) -> DecayFit:
    """Classify the decay of ``E(t) - E_inf`` as exponential or algebraic.

    An affine ``log(E - E_inf)`` (R^2 >= ``r2_exponential``) reads as
    exponential decay, i.e. exponent ``theta = 1/2``. Otherwise
    ``E - E_inf ~ (t + s)^(-beta)`` is fitted (``s`` by a bounded scalar
    search) and ``theta = beta / (1 + 2 beta)``, inverting
    ``beta = theta / (1 - 2 theta)``.
    """
    t = np.asarray(times, dtype=float)
    gap = np.asarray(totals, dtype=float) - e_infinity
    if t.size < 3:
        raise ValueError("need at least three points")
    if np.any(gap <= 0):
        raise DegenerateFitError("window touches E_inf; log(E - E_inf) undefined")
    y = np.log(gap)
    (slope, _), r2e = _linfit(t, y)

    span = t[-1] - t[0]
    lo = -t[0] + 1e-9 * max(span, 1.0)

    def loss(s):
        (_, _), r2 = _linfit(np.log(t + s), y)
        return -r2

    best = minimize_scalar(loss, bounds=(lo, lo + 100.0 * max(span, 1.0)), method="bounded",
                           options={"xatol": 1e-10 * max(span, 1.0)})
    (pslope, _), r2p = _linfit(np.log(t + best.x), y)
    beta = float(-pslope)
    if r2e >= r2_exponential:
        return DecayFit("exponential", 0.5, float(-slope), r2e, r2e, r2p)
    theta = beta / (1.0 + 2.0 * beta) if beta > 0 else float("nan")
    return DecayFit("power", theta, beta, r2p, r2e, r2p)


@dataclass
class EquilibriumReport:
    e_infinity: float
    u_norm_final: float
    critical_residual: float
    cauchy_sup: float
    energy_gap: float
    theta_fit: float | str | None
    fit_r_squared: float | None
    converged: bool
    criteria: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def omega_limit_check(grid: Grid, ledger, snapshots: Sequence, u_final, params: PotentialParams,
                      thresholds: Thresholds = Thresholds(), bulk: str = "f",
                      cauchy_norm: str = "l2") -> EquilibriumReport:
    """Check that the run ended near a single critical point with vanishing flow.

    ``ledger`` is an :class:`~qtensorflow.dynamics.EnergyLedger`; ``snapshots``
    are the ``Q`` fields at increasing times, the last being the final state.
    ``u_final`` is the final face velocity or its precomputed L2 norm.
    """
    if len(snapshots) < 3:
        raise ValueError("need at least three snapshots")
    totals = ledger.column("total")
    times = ledger.column("t")
    e_inf = estimate_e_infinity(totals)
    Q_final = np.asarray(snapshots[-1])
    if u_final is None:
        u_norm = 0.0
    elif np.isscalar(u_final):
        u_norm = float(u_final)
    else:
        u_norm = velocity_norm(grid, u_final)
    resid = critical_point_residual(grid, Q_final, params, bulk)
    cauchy = cauchy_certificate(snapshots, grid, norm=cauchy_norm)
    gap = abs(phase_energy(grid, Q_final, params) - e_inf)

    notes = []
    theta, r2 = None, None
    mask = totals > e_inf
    # fit on the part of the ledger strictly above the limit, first 90% of rows
    upto = max(3, int(0.9 * totals.size))
    idx = np.nonzero(mask[:upto])[0]
    if idx.size >= 3:
        lead = idx[: np.argmax(np.diff(np.r_[idx, idx[-1] + 2]) > 1) + 1]
        try:
            fit = lojasiewicz_fit(times[lead], totals[lead], e_inf)
            theta = "exponential" if fit.kind == "exponential" else fit.theta
            r2 = fit.r_squared
        except (DegenerateFitError, ValueError) as exc:
            notes.append(f"decay fit unavailable: {exc}")
    else:
        notes.append("decay fit unavailable: energy reached its limit too early")

    criteria = {
        "u_norm": u_norm <= thresholds.u_norm,
        "critical_residual": resid <= thresholds.critical_residual,
        "cauchy": cauchy <= thresholds.cauchy,
        "energy_gap": gap <= thresholds.energy_gap_rel * (1.0 + abs(e_inf)),
    }
    return EquilibriumReport(
        e_infinity=e_inf,
        u_norm_final=u_norm,
        critical_residual=resid,
        cauchy_sup=cauchy,
        energy_gap=gap,
        theta_fit=theta,
        fit_r_squared=r2,
        converged=all(criteria.values()),
        criteria=criteria,
        thresholds=asdict(thresholds),
        notes=notes,
    )
