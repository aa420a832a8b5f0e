import numpy as np
import pytest

from qtensorflow import algebra as al
from qtensorflow.dynamics import EnergyLedger, LedgerRow, SimState, StepperConfig, run
from qtensorflow.energy import PotentialParams
from qtensorflow.equilibrium import (
    DegenerateFitError,
    Thresholds,
    cauchy_certificate,
    critical_point_residual,
    estimate_e_infinity,
    lojasiewicz_fit,
    omega_limit_check,
    snapshot_increments,
)
from qtensorflow.grid import make_grid
from qtensorflow.rng import random_qtensor_field

from oracles import newton_uniaxial_root

SMOKE = PotentialParams(a=-1.0, b=0.0, c=1.0, epsilon=0.1)


def relax(grid, params, Q0, t_end, dt=0.05, every=20):
    snaps = []
    final, ledger = run(SimState.initial(grid, Q0), StepperConfig(dt=dt, params=params, flow=False), t_end,
                        callbacks=[lambda s: snaps.append(s.Q.copy())], every=every)
    return final, ledger, snaps


class TestCriticalResidual:
    def test_zero(self):
        g = make_grid((8, 8))
        assert critical_point_residual(g, np.zeros((8, 8, 3, 3)), SMOKE) == 0.0

    def test_uniaxial_root(self):
        g = make_grid((8, 8))
        s = newton_uniaxial_root(-1.0, 1.0)
        Q = np.broadcast_to(al.uniaxial(s, [0.6, 0.8, 0.0]), (8, 8, 3, 3)).copy()
        assert critical_point_residual(g, Q, SMOKE) <= 1e-14
        assert critical_point_residual(g, 0.9 * Q, SMOKE) > 1e-2

    def test_relaxed_endpoint(self):
        g = make_grid((8, 8))
        final, _, _ = relax(g, SMOKE, random_qtensor_field(g, 0, max_norm=1.0), 60.0)
        assert critical_point_residual(g, final.Q, SMOKE) <= 1e-6

    def test_fixed_point_equivalence(self):
        # a zero residual is exactly a fixed point of step_q with u = 0
        from qtensorflow.dynamics import step_q

        g = make_grid((8, 8))
        s = newton_uniaxial_root(-1.0, 1.0)
        Q = np.broadcast_to(al.uniaxial(s, [0, 0, 1.0]), (8, 8, 3, 3)).copy()
        for dt in (0.01, 1.0, 100.0):
            cfg = StepperConfig(dt=dt, params=SMOKE, flow=False, stabilization=1.0)
            assert np.max(np.abs(step_q(SimState.initial(g, Q), cfg) - Q)) <= 1e-13


class TestCauchy:
    def test_identical(self):
        Q = np.ones((4, 4, 3, 3))
        assert cauchy_certificate([Q, Q, Q]) == 0.0

    def test_alternating(self):
        A, B = np.zeros((4, 4, 3, 3)), np.ones((4, 4, 3, 3))
        inc = snapshot_increments([A, B, A, B, A])
        assert np.all(inc == inc[0]) and inc[0] > 0
        assert cauchy_certificate([A, B, A, B, A]) > Thresholds().cauchy

    def test_needs_two(self):
        with pytest.raises(ValueError):
            cauchy_certificate([np.zeros(3)])

    def test_converging_run_decreases(self):
        g = make_grid((8, 8))
        _, _, snaps = relax(g, SMOKE, random_qtensor_field(g, 1, max_norm=1.0), 20.0)
        inc = snapshot_increments(snaps, g)
        assert np.all(np.diff(inc[-10:]) < 0)

    def test_hminus1_weaker_than_l2(self, rng):
        g = make_grid((8, 8))
        snaps = [rng.standard_normal((8, 8, 3, 3)) for _ in range(4)]
        l2 = snapshot_increments(snaps, g, "l2")
        hm1 = snapshot_increments(snaps, g, "hminus1")
        # Poincare: ||D||_{-1} <= C ||D||, and rough differences shrink a lot
        assert np.all(hm1 < l2)
        with pytest.raises(ValueError):
            snapshot_increments(snaps, g, "h1")


class TestDecayFit:
    def test_exponential(self):
        t = np.linspace(0, 10, 101)
        fit = lojasiewicz_fit(t, 3.0 + np.exp(-t), 3.0)
        assert fit.kind == "exponential" and fit.theta == 0.5 and fit.r_squared >= 0.999
        assert fit.rate == pytest.approx(1.0, rel=1e-8)

    @pytest.mark.parametrize("beta", [1.0, 2.0, 0.5])
    def test_power_law(self, beta):
        t = np.linspace(0, 10, 201)
        fit = lojasiewicz_fit(t, (1 + t) ** -beta, 0.0)
        assert fit.kind == "power"
        assert fit.theta == pytest.approx(beta / (1 + 2 * beta), rel=0.05)

    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateFitError):
            lojasiewicz_fit(np.arange(5.0), np.full(5, 2.0), 2.0)


def _ledger(totals, kinetic=0.0):
    return EnergyLedger(LedgerRow(float(i), kinetic, 0.0, e, e, 0.0, 0.0, True) for i, e in enumerate(totals))


class TestOmegaLimit:
    def test_unique_minimizer(self):
        g = make_grid((8, 8))
        p = PotentialParams(a=1.0, b=0.0, c=1.0, epsilon=0.1)
        final, ledger, snaps = relax(g, p, random_qtensor_field(g, 3), 40.0)
        rep = omega_limit_check(g, ledger, snaps, final.u, p)
        assert rep.converged, rep.criteria
        assert np.max(np.abs(snaps[-1])) <= 1e-8
        assert rep.e_infinity == pytest.approx(p.mu * g.volume, abs=1e-12)
        tail = ledger.column("total")[-len(ledger) // 10:]
        assert tail.min() <= rep.e_infinity <= tail.max()

    def test_too_short(self):
        g = make_grid((8, 8))
        final, ledger, snaps = relax(g, SMOKE, random_qtensor_field(g, 3, max_norm=1.0), 1.0, every=5)
        rep = omega_limit_check(g, ledger, snaps, final.u, SMOKE)
        assert not rep.converged
        assert not rep.criteria["critical_residual"] and not rep.criteria["cauchy"]
        assert rep.to_dict()["criteria"] == rep.criteria

    def test_constant_in_time(self):
        g = make_grid((8, 8))
        s = newton_uniaxial_root(-1.0, 1.0)
        Q = np.broadcast_to(al.uniaxial(s, [0, 0, 1.0]), (8, 8, 3, 3)).copy()
        from qtensorflow.energy import phase_energy

        E = phase_energy(g, Q, SMOKE)
        rep = omega_limit_check(g, _ledger([E] * 20), [Q, Q, Q], 0.0, SMOKE)
        assert rep.cauchy_sup == 0.0 and rep.converged
        assert rep.theta_fit is None and rep.notes

    def test_u_threshold(self):
        g = make_grid((8, 8))
        Q = np.zeros((8, 8, 3, 3))
        p = PotentialParams(a=1.0, b=0.0, c=1.0)
        rep = omega_limit_check(g, _ledger([0.0] * 5), [Q, Q, Q], 1e-3, p)
        assert not rep.converged and rep.criteria == {
            "u_norm": False, "critical_residual": True, "cauchy": True, "energy_gap": True}

    def test_insufficient_snapshots(self):
        g = make_grid((8, 8))
        with pytest.raises(ValueError):
            omega_limit_check(g, _ledger([1.0]), [np.zeros((8, 8, 3, 3))] * 2, 0.0, SMOKE)

    def test_e_infinity_tail_median(self):
        assert estimate_e_infinity(np.r_[np.linspace(10, 1, 90), np.full(10, 1.0)]) == 1.0
        with pytest.raises(ValueError):
            estimate_e_infinity([])


def test_velocity_bounded_by_dissipation():
    """||u|| <= sqrt(D / nu) * C_P with C_P from the smallest no-slip Laplacian eigenvalue."""
    from scipy.sparse.linalg import eigsh

    from qtensorflow.grid import velocity_norm

    g = make_grid((16, 16))
    lam = min(float(eigsh(-g.velocity_laplacian_matrix(k), k=1, sigma=0, which="LM")[0][0]) for k in range(2))
    c_p = 1.0 / np.sqrt(lam)
    final, ledger = run(SimState.initial(g, random_qtensor_field(g, 9, max_norm=1.0)),
                        StepperConfig(dt=0.01, params=SMOKE), 3.0)
    assert velocity_norm(g, final.u) > 0
    assert velocity_norm(g, final.u) <= np.sqrt(ledger.rows[-1].dissipation / SMOKE.nu) * c_p * (1 + 1e-12)
