import math
from collections import namedtuple

import numpy as np
import pytest

from qtensorflow import algebra as al
from qtensorflow.energy import (
    PotentialParams,
    bulk_energy_density,
    compute_mu,
    dissipation,
    elastic_energy,
    molecular_field_H,
    phase_energy,
    total_energy,
)
from qtensorflow.grid import make_grid, velocity_norm, zero_velocity
from qtensorflow.rng import random_qtensor_field

Coeffs = namedtuple("Coeffs", "a b c epsilon nu gamma mu")


def brute_force_mu(a, b, c):
    """Scan g on a fine grid, then bisect g' around the best sample."""
    g = lambda r: 0.5 * a * r**2 - abs(b) / 3.0 * r**3 + c / 8.0 * r**4
    dg = lambda r: a * r - abs(b) * r**2 + 0.5 * c * r**3
    rmax = 8.0 * (abs(a) + abs(b) + 1.0) / c
    r = np.linspace(0.0, rmax, 200_001)
    k = int(np.argmin(g(r)))
    if k == 0:
        return max(0.0, -g(0.0))
    lo, hi = r[max(k - 1, 0)], r[min(k + 1, r.size - 1)]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dg(lo) * dg(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return max(0.0, -g(0.5 * (lo + hi)))


class TestMu:
    def test_nonnegative_quadratic(self):
        assert compute_mu(1.0, 0.0, 1.0) == 0.0

    def test_negative_a(self):
        assert compute_mu(-1.0, 0.0, 1.0) == pytest.approx(0.5, rel=1e-14)

    @pytest.mark.parametrize("abc", [(1.0, 3.0, 2.0), (-1.0, 2.0, 0.5), (0.2, -1.0, 3.0), (-3.0, 0.0, 7.0)])
    def test_scan_oracle(self, abc):
        assert compute_mu(*abc) == pytest.approx(brute_force_mu(*abc), rel=1e-9, abs=1e-14)

    def test_rejects_nonpositive_c(self):
        with pytest.raises(ValueError):
            compute_mu(1.0, 0.0, 0.0)

    def test_params_default_mu_and_validation(self):
        assert PotentialParams(a=-1, b=0, c=1).mu == pytest.approx(0.5)
        assert PotentialParams(a=-1, b=0, c=1, mu=2.0).mu == 2.0
        for bad in ({"c": 0}, {"epsilon": 0}, {"nu": -1}, {"gamma": 0}):
            with pytest.raises(ValueError):
                PotentialParams(**bad)

    def test_certificate_on_samples(self, rng):
        p = PotentialParams(a=-0.8, b=1.9, c=1.1)
        Q = al.deviator(al.sym(rng.standard_normal((20000, 3, 3)))) * rng.uniform(0, 5, (20000, 1, 1))
        r4 = al.norm(Q) ** 4
        assert np.all(al.potential_F(Q, p) + p.mu - p.c / 8 * r4 >= -1e-12 * (1 + r4))


class TestMolecularField:
    def test_constant_field(self):
        g = make_grid((8, 8))
        Q0 = al.uniaxial(0.6, [0.0, 0.6, 0.8])
        p = Coeffs(1.0, 0.0, 0.0, 0.3, 1.0, 1.0, 0.0)
        H = molecular_field_H(g, np.broadcast_to(Q0, (8, 8, 3, 3)), p)
        assert np.allclose(H, Q0, atol=1e-14)

    def test_zero(self):
        g = make_grid((8, 8))
        assert np.all(molecular_field_H(g, np.zeros((8, 8, 3, 3)), PotentialParams()) == 0)

    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_fourier_symbol(self, n):
        L = 2.0
        g = make_grid((n, n), L / n, "periodic")
        h = g.spacing[0]
        X, _ = g.mesh()
        Q0 = al.biaxial(0.5, 0.2, [1.0, 0, 0], [0, 0, 1.0])
        mode = np.cos(2 * np.pi * X / L)
        p = Coeffs(0.7, 0.0, 0.0, 0.1, 1.0, 1.0, 0.0)
        lam = 2 * (1 - math.cos(2 * math.pi * h / L)) / h**2
        H = molecular_field_H(g, mode[..., None, None] * Q0, p)
        assert np.allclose(H, (p.epsilon * lam + p.a) * mode[..., None, None] * Q0, atol=1e-12)


class TestTotalEnergy:
    def test_vacuum(self):
        g = make_grid((8, 8))
        p = PotentialParams(a=-1.0, b=0.0, c=1.0)
        e = total_energy(g, zero_velocity(g), np.zeros((8, 8, 3, 3)), p)
        assert e.total == pytest.approx(p.mu * g.volume, rel=1e-14)
        assert e.kinetic == 0 and e.elastic == 0

    def test_constant_q(self):
        g = make_grid((8, 6), 0.25)
        p = PotentialParams(a=-0.5, b=1.2, c=2.0)
        Q0 = al.uniaxial(-0.9, [0.6, 0.0, 0.8])
        e = total_energy(g, zero_velocity(g), np.broadcast_to(Q0, (8, 6, 3, 3)), p)
        assert e.total == pytest.approx(g.volume * (al.potential_F(Q0, p) + p.mu), rel=1e-13)

    def test_nonnegative_and_additive(self, rng):
        g = make_grid((16, 16))
        p = PotentialParams(a=-2.0, b=3.0, c=1.0)
        Q = random_qtensor_field(g, 3, amplitude=4.0)
        u = tuple(rng.standard_normal(g.face_shape(k)) for k in range(2))
        e = total_energy(g, u, Q, p)
        assert e.kinetic >= 0 and e.elastic >= 0 and e.bulk >= 0
        assert e.total == pytest.approx(e.kinetic + e.elastic + e.bulk, rel=1e-14)
        assert e.kinetic == pytest.approx(0.5 * velocity_norm(g, u) ** 2)
        # quadrature is linear over disjoint cell sets
        dens = bulk_energy_density(Q, p)
        assert e.bulk == pytest.approx(dens[:8].sum() * g.cell_volume + dens[8:].sum() * g.cell_volume)
        assert phase_energy(g, Q, p) == pytest.approx(e.elastic + e.bulk)
        assert elastic_energy(g, Q, p) == pytest.approx(e.elastic)


class TestDissipation:
    def test_zero(self):
        g = make_grid((8, 8))
        assert dissipation(g, zero_velocity(g), np.zeros((8, 8, 3, 3)), PotentialParams()) == 0

    def test_scaling(self, rng):
        g = make_grid((12, 12))
        p = PotentialParams(nu=0.7)
        u = tuple(rng.standard_normal(g.face_shape(k)) for k in range(2))
        H = rng.standard_normal((12, 12, 3, 3))
        u2 = tuple(2 * x for x in u)
        d_u = dissipation(g, u, np.zeros_like(H), p)
        assert dissipation(g, u2, H, p) - dissipation(g, u, H, p) == pytest.approx(3 * d_u, rel=1e-12)
        assert dissipation(g, u, H, p) >= 0

    def test_shear_mode_symbol(self):
        L, n = 1.0, 16
        g = make_grid((n, n), L / n, "periodic")
        h = g.spacing[0]
        y = g.cell_centers(1)
        u = (np.broadcast_to(np.sin(2 * np.pi * y / L), (n, n)).copy(), np.zeros((n, n)))
        p = PotentialParams(nu=0.3)
        lam = 2 * (1 - math.cos(2 * math.pi * h / L)) / h**2
        d = dissipation(g, u, np.zeros((n, n, 3, 3)), p)
        assert d == pytest.approx(p.nu * lam * velocity_norm(g, u) ** 2, rel=1e-12)
