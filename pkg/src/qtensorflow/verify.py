"""Self-verification suites built from exact identities and oracle comparisons.

Each suite returns a :class:`SuiteResult`; :func:`run_suites` collects them
and :func:`format_table` renders the pass/fail table printed by the CLI.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import algebra
from .dynamics import SimState, StepperConfig, run
from .energy import PotentialParams, compute_mu, molecular_field_H, phase_energy
from .equilibrium import lojasiewicz_fit
from .grid import (
    Grid,
    advect,
    advect_dual,
    cell_velocity_gradient,
    cell_velocity_gradient_adjoint,
    divergence,
    face_inner,
    gradient,
    inner,
    laplacian,
    make_grid,
    project,
)
from .rng import random_qtensor_field

__all__ = [
    "SuiteResult",
    "SUITES",
    "PARAMETER_SETS",
    "random_symmetric_traceless",
    "random_smooth_qfield",
    "random_fields_for",
    "sbp_residuals",
    "homogeneous_rk4",
    "run_suites",
    "format_table",
]

# Coefficient sets covering a < 0, a > 0 and b != 0.
PARAMETER_SETS = (
    PotentialParams(a=-1.0, b=0.0, c=1.0),
    PotentialParams(a=1.0, b=0.0, c=1.0),
    PotentialParams(a=-0.5, b=1.5, c=1.0),
    PotentialParams(a=0.3, b=-2.0, c=0.5),
    PotentialParams(a=-2.0, b=3.0, c=4.0),
)

SMOKE = PotentialParams(a=-1.0, b=0.0, c=1.0, epsilon=0.1, nu=1.0, gamma=1.0)

BC_COMBINATIONS = (
    ((16, 12), (False, False)),
    ((16, 12), (True, True)),
    ((16, 12), (True, False)),
    ((16, 12), (False, True)),
    ((6, 5, 4), (False, False, False)),
    ((6, 5, 4), (True, True, True)),
    ((6, 5, 4), (True, False, True)),
)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    measured: float
    criterion: str
    detail: str = ""


def random_symmetric_traceless(rng: np.random.Generator, n: int) -> np.ndarray:
    return algebra.deviator(algebra.sym(rng.uniform(-0.5, 0.5, (n, 3, 3))))


def random_smooth_qfield(grid: Grid, rng: np.random.Generator, modes: int = 3) -> np.ndarray:
    """Symmetric traceless field built from low Neumann cosine modes with random coefficients."""
    out = np.zeros(grid.dims + (3, 3))
    coords = grid.mesh()
    L = grid.lengths
    for idx in np.ndindex(*(modes,) * grid.ndim):
        shape = np.ones(grid.dims)
        for x, k, length in zip(coords, idx, L):
            shape = shape * np.cos(k * np.pi * x / length)
        C = random_symmetric_traceless(rng, 1)[0] * 2.0 / (1.0 + sum(idx))
        out += shape[..., None, None] * C
    return out


def random_fields_for(grid: Grid, rng: np.random.Generator):
    """Random cell field ``phi`` and a face field ``v`` that vanishes on walls."""
    phi = rng.standard_normal(grid.dims)
    v = []
    for k in range(grid.ndim):
        vk = rng.standard_normal(grid.face_shape(k))
        if not grid.periodic[k]:
            idx = [slice(None)] * grid.ndim
            idx[k] = [0, -1]
            vk[tuple(idx)] = 0.0
        v.append(vk)
    return phi, tuple(v)


def sbp_residuals(grid: Grid, rng: np.random.Generator) -> dict:
    """Relative residuals of the discrete integration-by-parts identities."""
    phi, v = random_fields_for(grid, rng)
    psi = rng.standard_normal(grid.dims)
    gphi = gradient(grid, phi)
    gpsi = gradient(grid, psi)
    out = {}

    lhs = sum(face_inner(grid, k, gphi[k], v[k]) for k in range(grid.ndim))
    rhs = -inner(grid, phi, divergence(grid, v))
    out["grad_div"] = abs(lhs - rhs) / (abs(lhs) + abs(rhs))

    lhs = inner(grid, laplacian(grid, phi), psi)
    rhs = -sum(face_inner(grid, k, gphi[k], gpsi[k]) for k in range(grid.ndim))
    out["laplacian_sym"] = abs(lhs - rhs) / (abs(lhs) + abs(rhs))

    lap = laplacian(grid, phi)
    composed = divergence(grid, gradient(grid, phi))
    out["div_grad"] = float(np.max(np.abs(lap - composed)) / np.max(np.abs(lap)))

    lap_d = laplacian(grid, phi, "noslip")
    gd = gradient(grid, psi, "noslip")
    lhs = inner(grid, lap_d, psi)
    rhs = -sum(face_inner(grid, k, gradient(grid, phi, "noslip")[k], gd[k]) for k in range(grid.ndim))
    out["laplacian_noslip_sym"] = abs(lhs - rhs) / (abs(lhs) + abs(rhs))

    # transport and stretching adjoints, with a divergence-free velocity
    u, _ = project(grid, v)
    Q = random_symmetric_traceless(rng, grid.ncells).reshape(grid.dims + (3, 3))
    H = rng.standard_normal(grid.dims + (3, 3))
    lhs = inner(grid, advect(grid, u, Q), H)
    T = advect_dual(grid, Q, H)
    rhs = sum(face_inner(grid, k, T[k], u[k]) for k in range(grid.ndim))
    out["advect_dual"] = abs(lhs - rhs) / (abs(lhs) + abs(rhs))

    M = rng.standard_normal(grid.dims + (3, 3))
    lhs = float(np.sum(M * cell_velocity_gradient(grid, u)))
    V = cell_velocity_gradient_adjoint(grid, M)
    rhs = sum(float(np.sum(V[k] * u[k])) for k in range(grid.ndim))
    out["velocity_gradient_adjoint"] = abs(lhs - rhs) / (abs(lhs) + abs(rhs))
    return out


def homogeneous_rk4(Q0, params: PotentialParams, h: float, times, bulk: str = "f") -> np.ndarray:
    """Classical RK4 for ``dQ/dt = -gamma f(Q)``, sampled at ``times`` (multiples of ``h``)."""
    force = algebra.bulk_force_f if bulk == "f" else algebra.bulk_force_f_pz

    def rhs(q):
        return -params.gamma * force(q, params)

    q = np.array(Q0, dtype=float)
    t = 0.0
    out = []
    for target in times:
        n = int(round((target - t) / h))
        for _ in range(n):
            k1 = rhs(q)
            k2 = rhs(q + 0.5 * h * k1)
            k3 = rhs(q + 0.5 * h * k2)
            k4 = rhs(q + h * k3)
            q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += n * h
        out.append(q.copy())
    return np.array(out)


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def suite_sigma_s(seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed)
    n = 1000
    G = rng.standard_normal((n, 3, 3))
    Q = random_symmetric_traceless(rng, n)
    H = algebra.sym(rng.standard_normal((n, 3, 3)))
    lhs = algebra.contract(algebra.sigma_stress(H, Q), G)
    rhs = algebra.contract(algebra.stretching_S(G, Q, "full"), H)
    scale = algebra.norm(G) * algebra.norm(Q) * algebra.norm(H)
    err = float(np.max(np.abs(lhs - rhs) / scale))
    return SuiteResult("sigma_S_cancellation", err <= 1e-12, err, "rel err <= 1e-12", f"{n} triples")


def suite_sbp(seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for dims, per in BC_COMBINATIONS:
        grid = make_grid(dims, 1.0 / dims[0], periodic=per)
        for key, val in sbp_residuals(grid, rng).items():
            if val > worst:
                worst, where = val, f"{key} on {dims} periodic={per}"
    return SuiteResult("summation_by_parts", worst <= 1e-12, worst, "residual <= 1e-12",
                       f"worst: {where}" if where else "")


def gradient_check_ratios(seed: int, pairs: int = 10, params: PotentialParams = SMOKE):
    grid = make_grid((32, 32))
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(pairs):
        Q = random_smooth_qfield(grid, rng)
        D = random_smooth_qfield(grid, rng)
        exact = inner(grid, molecular_field_H(grid, Q, params), D)
        errs = []
        for h in (1e-3, 1e-4):
            fd = (phase_energy(grid, Q + h * D, params) - phase_energy(grid, Q - h * D, params)) / (2 * h)
            errs.append(abs(fd - exact))
        ratios.append(errs[0] / errs[1])
    return np.array(ratios)


def suite_gradient(seed: int) -> SuiteResult:
    r = gradient_check_ratios(seed)
    ok = bool(np.all((r >= 80) & (r <= 120)))
    return SuiteResult("gradient_check", ok, float(r[np.argmax(np.abs(np.log(r / 100)))]),
                       "FD error ratio in [80, 120]", f"ratios {r.min():.1f}..{r.max():.1f}")


def mu_certificate_margin(params: PotentialParams, rng: np.random.Generator, n: int = 100_000) -> float:
    """Smallest ``(F + mu - c|Q|^4/8) / (1 + |Q|^4)`` over sampled ``Q``."""
    mu = compute_mu(params.a, params.b, params.c)
    Q = random_symmetric_traceless(rng, n)
    Q /= algebra.norm(Q)[:, None, None]
    # radii spanning small, critical and large scales
    radii = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), n))
    r_star = _critical_radius(params)
    radii[: n // 4] = r_star * (1.0 + 1e-3 * rng.standard_normal(n // 4))
    # the most negative cubic term occurs for uniaxial directions
    m = n // 8
    sign = -1.0 if params.b >= 0 else 1.0
    Q[:m] = sign * algebra.uniaxial(1.0, [0.0, 0.0, 1.0]) / math.sqrt(2.0 / 3.0)
    Q *= radii[:, None, None]
    norm4 = algebra.norm(Q) ** 4
    F = algebra.potential_F(Q, params)
    return float(np.min((F + mu - params.c / 8.0 * norm4) / (1.0 + norm4)))


def _critical_radius(params: PotentialParams) -> float:
    a, b, c = params.a, abs(params.b), params.c
    disc = b * b - 2.0 * a * c
    return max(0.0, (b + math.sqrt(disc)) / c) if disc >= 0 else 0.0


def suite_mu(seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed)
    margins = [mu_certificate_margin(p, rng) for p in PARAMETER_SETS]
    worst = min(margins)
    return SuiteResult("mu_certificate", worst >= -1e-12, worst, "F + mu - c|Q|^4/8 >= -1e-12(1+|Q|^4)",
                       f"{len(PARAMETER_SETS)} parameter sets")


def homogeneous_oracle_error(params: PotentialParams, Q0, dt: float = 0.05, t_end: float = 10.0,
                             splitting: str = "semi_implicit") -> float:
    """Max trajectory error of the stepper against RK4 at ``dt/100``, in units of ``dt |f(Q0)|``.

    ``Q0`` may be a single tensor or a stack ``(k, 3, 3)``; each is run as a
    spatially constant field and the worst ratio is returned. The RK4
    reference is integrated for the whole stack at once.
    """
    Q0 = np.asarray(Q0, dtype=float)
    stack = Q0.reshape(-1, 3, 3)
    grid = make_grid((4, 4))
    cfg = StepperConfig(dt=dt, params=params, splitting=splitting, flow=False)
    samples, times = [], []
    for q in stack:
        traj = []
        times = []

        def record(state, traj=traj, times=times):
            traj.append(state.Q[0, 0].copy())
            times.append(state.t)

        run(SimState.initial(grid, np.broadcast_to(q, grid.dims + (3, 3)).copy()), cfg, t_end,
            callbacks=[record], every=1)
        samples.append(traj)
    ref = homogeneous_rk4(stack, params, dt / 100.0, times)  # (steps, k, 3, 3)
    err = np.max(algebra.norm(np.array(samples).transpose(1, 0, 2, 3) - ref), axis=0)
    scale = dt * algebra.norm(algebra.bulk_force_f(stack, params))
    return float(np.max(err / scale))


def suite_ode(seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for params in (SMOKE, PARAMETER_SETS[1]):
        worst = max(worst, homogeneous_oracle_error(params, random_symmetric_traceless(rng, 3)))
    return SuiteResult("ode_oracle", worst <= 5.0, worst, "err <= 5 dt |f(Q0)|", "RK4 at dt/100")


def residual_halving_ratio(dt: float = 0.005, t_probe: float = 0.5, seed: int = 0) -> float:
    """Ratio of ``|law_residual(t_probe)|`` at ``dt`` and ``dt/2`` on smoke-run data."""
    grid = make_grid((32, 32))
    Q = random_qtensor_field(grid, seed, max_norm=1.0)
    vals = []
    for step in (dt, dt / 2):
        _, ledger = run(SimState.initial(grid, Q), StepperConfig(dt=step, params=SMOKE), t_probe)
        vals.append(abs(ledger.rows[-1].law_residual))
    return vals[0] / vals[1]


def suite_ledger_order(seed: int) -> SuiteResult:
    r = residual_halving_ratio(seed=seed)
    return SuiteResult("ledger_residual_order", 1.7 <= r <= 2.3, r, "ratio in [1.7, 2.3]",
                       "dt 0.005 -> 0.0025 at t = 0.5")


def suite_decay_fit(seed: int) -> SuiteResult:
    t = np.linspace(0.0, 10.0, 201)
    exp_fit = lojasiewicz_fit(t, 1.0 + np.exp(-t), 1.0)
    pow_fit = lojasiewicz_fit(t, 1.0 + 1.0 / (1.0 + t), 1.0)
    err = abs(pow_fit.theta - 1.0 / 3.0) / (1.0 / 3.0)
    ok = exp_fit.kind == "exponential" and exp_fit.r_squared >= 0.999 and pow_fit.kind == "power" and err <= 0.05
    return SuiteResult("lojasiewicz_selftest", ok, err, "exponential R^2 >= 0.999, theta = 1/3 within 5%")


SUITES: dict[str, Callable[[int], SuiteResult]] = {
    "sigma_S_cancellation": suite_sigma_s,
    "summation_by_parts": suite_sbp,
    "gradient_check": suite_gradient,
    "mu_certificate": suite_mu,
    "ode_oracle": suite_ode,
    "ledger_residual_order": suite_ledger_order,
    "lojasiewicz_selftest": suite_decay_fit,
}


def run_suites(seed: int = 0, names=None) -> list[SuiteResult]:
    names = list(SUITES) if names is None else list(names)
    return [SUITES[n](seed) for n in names]


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'suite':<{width}}  result  {'measured':>12}  criterion"]
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {tag:<6}  {r.measured:>12.4e}  {r.criterion}"
                     + (f"  ({r.detail})" if r.detail else ""))
    return "\n".join(lines)
