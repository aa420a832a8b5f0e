"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about four minutes).
"""
import json
import math
import time

import numpy as np
import pytest

from qtensorflow import algebra as al
from qtensorflow.cli import cmd_analyze, cmd_relax, cmd_run, main
from qtensorflow.config import RunConfig
from qtensorflow.dynamics import EnergyLedger, SimState, StepperConfig, run, symmetry_drift, trace_drift
from qtensorflow.energy import PotentialParams
from qtensorflow.equilibrium import lojasiewicz_fit
from qtensorflow.grid import make_grid
from qtensorflow.rng import random_qtensor_field
from qtensorflow.verify import (
    BC_COMBINATIONS,
    PARAMETER_SETS,
    gradient_check_ratios,
    homogeneous_oracle_error,
    mu_certificate_margin,
    random_symmetric_traceless,
    residual_halving_ratio,
    sbp_residuals,
)

SMOKE = dict(dims=(32, 32), a=-1.0, b=0.0, c=1.0, epsilon=0.1, nu=1.0, gamma=1.0, dt=0.005, seed=0)
SMOKE_PARAMS = PotentialParams(a=-1.0, b=0.0, c=1.0, epsilon=0.1, nu=1.0, gamma=1.0)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail, elapsed=None, limit=None):
        timing = ""
        if elapsed is not None:
            timing = f" [{elapsed:.1f}s / limit {limit:g}s]"
            ok = ok and elapsed < limit
        with capsys.disabled():
            print(f"\nCRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {title}: {detail}{timing}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    """Coupled smoke run through the CLI: 10^4 steps to t = 50, one snapshot per time unit."""
    out = tmp_path_factory.mktemp("smoke")
    t0 = time.perf_counter()
    code = cmd_run(RunConfig(**SMOKE, t_end=50.0, snapshots=50, out=str(out)))
    return out, code, time.perf_counter() - t0


def test_c01_sigma_s_cancellation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 1000
    G = rng.standard_normal((n, 3, 3))
    H = rng.standard_normal((n, 3, 3))
    Q = random_symmetric_traceless(rng, n)
    lhs = al.contract(al.sigma_stress(H, Q), G)
    rhs = al.contract(al.stretching_S(G, Q, "full"), H)
    rel = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), al.norm(G) * al.norm(H) * al.norm(Q))))
    verdict(1, "sigma/S cancellation", rel <= 1e-12, f"max rel err {rel:.2e} over {n} triples (<= 1e-12)",
            time.perf_counter() - t0, 1)


def test_c02_variational_consistency(verdict):
    t0 = time.perf_counter()
    r = gradient_check_ratios(seed=2, pairs=10)
    ok = bool(np.all((r >= 80) & (r <= 120)))
    verdict(2, "variational consistency", ok,
            f"FD error ratio h=1e-3 / h=1e-4 in [{r.min():.2f}, {r.max():.2f}] over 10 pairs (need [80, 120])",
            time.perf_counter() - t0, 10)


def test_c03_coercivity_certificate(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    margins = [mu_certificate_margin(p, rng, 100_000) for p in PARAMETER_SETS]
    assert any(p.a < 0 for p in PARAMETER_SETS) and any(p.b != 0 for p in PARAMETER_SETS)
    worst = min(margins)
    verdict(3, "coercivity certificate", worst >= -1e-12,
            f"min (F + mu - c|Q|^4/8)/(1+|Q|^4) = {worst:.2e} over 1e5 samples x {len(margins)} sets",
            time.perf_counter() - t0, 5)


def test_c04_discrete_energy_law(verdict, smoke_run):
    out, code, elapsed = smoke_run
    t0 = time.perf_counter()
    ledger = EnergyLedger.from_csv(out / "energy.csv")
    total = ledger.column("total")
    increases = int(np.sum(np.diff(total) > 0))
    flagged = sum(not r.monotone for r in ledger)
    ratio = residual_halving_ratio(dt=0.005, t_probe=0.5)
    ok = code == 0 and len(ledger) >= 10_000 and flagged == 0 and 1.7 <= ratio <= 2.3
    verdict(4, "discrete energy law", ok,
            f"{len(ledger)} steps, {increases} raw increases, {flagged} rows beyond 1e-14 rel slack, "
            f"max increment {np.max(np.diff(total)):.1e}; law_residual ratio dt/(dt/2) = {ratio:.3f}",
            elapsed + time.perf_counter() - t0, 120)


def test_c05_homogeneous_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    errs = [homogeneous_oracle_error(p, random_symmetric_traceless(rng, 3), dt=0.05, t_end=10.0)
            for p in (SMOKE_PARAMS, PotentialParams(a=1.0, b=0.0, c=1.0))]
    worst = max(errs)
    verdict(5, "homogeneous-mode oracle", worst <= 5.0,
            f"max err / (dt |f(Q0)|) = {worst:.3f} (<= 5) over 3 draws x (a=-1, a=+1), dt = 0.05, "
            f"RK4 at dt/100, t in [0, 10]", time.perf_counter() - t0, 5)


def test_c06_convergence_to_critical_set(verdict, smoke_run, tmp_path):
    out, code, elapsed = smoke_run
    t0 = time.perf_counter()
    relax_dir = tmp_path / "relax"
    relax_code = cmd_relax(RunConfig(**SMOKE, t_end=40.0, snapshots=40, out=str(relax_dir)))
    lines, ok = [], relax_code == 0 and code == 0
    for name, d in (("relax", relax_dir), ("coupled", out)):
        ok = cmd_analyze(d) == 0 and ok
        rep = json.loads((d / "equilibrium.json").read_text())
        lines.append(f"{name}: |u|={rep['u_norm_final']:.1e} res={rep['critical_residual']:.1e} "
                     f"cauchy={rep['cauchy_sup']:.1e} gap={rep['energy_gap']:.1e}")
        ok = ok and rep["converged"]
    verdict(6, "convergence to critical set", ok, "; ".join(lines), elapsed + time.perf_counter() - t0, 300)


def test_c07_trace_symmetry(verdict):
    t0 = time.perf_counter()
    grid = make_grid((32, 32))
    state = SimState.initial(grid, random_qtensor_field(grid, 0, max_norm=1.0))
    cfg = StepperConfig(dt=0.005, params=SMOKE_PARAMS, stretching="antisym", bulk="f_pz")
    worst = {"trace": 0.0, "sym": 0.0}

    def watch(s):
        worst["trace"] = max(worst["trace"], trace_drift(s.Q))
        worst["sym"] = max(worst["sym"], symmetry_drift(s.Q))

    _, ledger = run(state, cfg, 50.0, callbacks=[watch])
    ok = len(ledger) >= 10_000 and worst["trace"] <= 1e-9 and worst["sym"] <= 1e-9
    verdict(7, "trace/symmetry preservation", ok,
            f"{len(ledger)} steps, max |tr Q| = {worst['trace']:.1e}, max |Q - Q^t| = {worst['sym']:.1e}",
            time.perf_counter() - t0, 120)


def test_c08_operator_contracts(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for dims, per in BC_COMBINATIONS:
        grid = make_grid(dims, 1.0 / dims[0], periodic=per)
        worst = max(worst, max(sbp_residuals(grid, rng).values()))
    verdict(8, "operator contracts", worst <= 1e-12,
            f"worst SBP / div-grad residual {worst:.1e} over {len(BC_COMBINATIONS)} BC combinations",
            time.perf_counter() - t0, 1)


def test_c09_decay_fit(verdict):
    t0 = time.perf_counter()
    t = np.linspace(0.0, 10.0, 201)
    e = lojasiewicz_fit(t, 1.0 + np.exp(-t), 1.0)
    p = lojasiewicz_fit(t, 1.0 + 1.0 / (1.0 + t), 1.0)
    err = abs(p.theta - 1 / 3) * 3
    ok = e.kind == "exponential" and e.r_squared >= 0.999 and p.kind == "power" and err <= 0.05
    verdict(9, "decay-fit self-test", ok,
            f"exp -> {e.kind} (R^2 {e.r_squared:.6f}); power -> theta {p.theta:.5f} (rel err {err:.1e})",
            time.perf_counter() - t0, 1)


def test_c10_reproducibility(verdict, tmp_path, monkeypatch):
    t0 = time.perf_counter()
    monkeypatch.setenv("QTF_THREADS", "1")
    cfg = tmp_path / "repro.cfg"
    cfg.write_text("dims = 32x32\na = -1\nb = 0\nc = 1\ndt = 0.005\nt_end = 5\nseed = 11\nsnapshots = 5\n")
    codes = [main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]) for name in ("a", "b")]
    same = (tmp_path / "a" / "energy.csv").read_bytes() == (tmp_path / "b" / "energy.csv").read_bytes()
    verdict(10, "reproducibility", codes == [0, 0] and same,
            f"exit codes {codes}, energy.csv byte-identical: {same}", time.perf_counter() - t0, 120)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
