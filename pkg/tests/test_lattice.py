"""Lattice geometry, configurations, and tilt profiles."""

import numpy as np
import pytest

from polarssep.lattice import (Configuration, GeometryError, SizingError,
                               build_ball, constant_tilt, exchange, grid_tilt,
                               sample_product_measure, sigma_T, smoothstep_tilt)


def brute_force_count(radius):
    n = 0
    for x in range(-radius, radius + 1):
        for y in range(-radius, radius + 1):
            if 0 < x * x + y * y <= radius * radius:
                n += 1
    return n


class TestBuildBall:
    def test_radius_and_count_T100(self, small_ball):
        # floor(100^0.6) = 15; brute force gives 708 sites with 0 < |x| <= 15
        assert small_ball.radius == 15
        assert small_ball.n_sites - 1 == brute_force_count(15) == 708

    def test_radius_and_count_T4(self):
        ball = build_ball(4.0, 0.51)
        assert ball.radius == 2
        assert ball.n_sites - 1 == brute_force_count(2) == 12

    def test_scale_precondition(self):
        with pytest.raises(ValueError):
            build_ball(1.0, 0.6)

    def test_rmax_precondition(self):
        with pytest.raises(ValueError):
            build_ball(100.0, 0.4)
        with pytest.raises(ValueError):
            build_ball(100.0, 1.0)

    def test_site_budget(self):
        with pytest.raises(SizingError) as err:
            build_ball(1e6, 0.9, max_sites=10_000)
        assert "sites" in str(err.value)

    def test_index_bijection(self, small_ball):
        b = small_ball
        for i in range(b.n_sites):
            assert b.site_index(int(b.x1[i]), int(b.x2[i])) == i
        assert b.site_index(b.radius + 5, 0) == -1

    def test_bonds_unique_and_inside(self, small_ball):
        b = small_ball
        seen = set()
        for k in range(b.n_bonds):
            u, v, j = int(b.bond_u[k]), int(b.bond_v[k]), int(b.bond_dir[k])
            assert (u, j) not in seen
            seen.add((u, j))
            dx = int(b.x1[v]) - int(b.x1[u])
            dy = int(b.x2[v]) - int(b.x2[u])
            assert (dx, dy) == ((1, 0) if j == 0 else (0, 1))

    def test_block_factory(self, block22):
        assert block22.n_sites == 4
        assert block22.n_bonds == 4  # square of bonds
        assert block22.origin_index >= 0


class TestSigma:
    def test_examples(self):
        ball = build_ball(10_000.0, 0.55)
        i = ball.site_index(100, 0)
        assert sigma_T(ball, i) == pytest.approx(0.5, abs=1e-15)

        ball_e2 = build_ball(float(np.exp(2.0)), 0.9)
        j = ball_e2.site_index(1, 0)
        assert sigma_T(ball_e2, j) == 0.0

        ball100 = build_ball(100.0, 0.6)
        k = ball100.site_index(3, 4)
        assert sigma_T(ball100, k) == pytest.approx(np.log(5) / np.log(100), abs=1e-15)

    def test_origin_error(self, small_ball):
        with pytest.raises(GeometryError):
            sigma_T(small_ball, small_ball.origin_index)

    def test_range_and_monotone(self, small_ball):
        b = small_ball
        non_origin = np.arange(b.n_sites) != b.origin_index
        assert np.all(b.sigma[non_origin] >= 0.0)
        assert np.all(b.sigma[non_origin] <= b.r_max)
        assert np.all(b.sigma[b.r2 > 1] > 0.0)
        order = np.argsort(b.r2)
        assert np.all(np.diff(b.sigma[order]) >= -1e-15)

    def test_polar_reconstruction(self, small_ball):
        b = small_ball
        for i in (1, 100, 400, b.n_sites - 1):
            p = b.polar(i)
            assert p.radius * np.cos(p.theta) == pytest.approx(b.x1[i], abs=0.5)
            assert p.radius * np.sin(p.theta) == pytest.approx(b.x2[i], abs=0.5)
            assert -np.pi <= p.theta < np.pi


class TestConfiguration:
    def test_exchange_swaps_and_conserves(self, small_ball):
        config = sample_product_measure(small_ball, 0.5, seed=1)
        i = small_ball.site_index(2, 3)
        j = small_ball.site_index(2, 4)
        before = config.eta.copy()
        count = config.particle_count
        exchange(small_ball, config, i, j)
        assert config.eta[i] == before[j] and config.eta[j] == before[i]
        assert config.eta.sum() == count

    def test_exchange_involution(self, small_ball):
        rng = np.random.default_rng(7)
        config = sample_product_measure(small_ball, 0.4, seed=2)
        for _ in range(50):
            i = int(rng.integers(small_ball.n_sites))
            nbrs = small_ball.nbr[i][small_ball.nbr[i] >= 0]
            j = int(rng.choice(nbrs))
            before = config.eta.copy()
            exchange(small_ball, config, i, j)
            exchange(small_ball, config, i, j)
            assert np.array_equal(config.eta, before)

    def test_exchange_equal_bits_noop(self, small_ball):
        config = Configuration(np.ones(small_ball.n_sites, np.uint8))
        i = small_ball.site_index(0, 1)
        j = small_ball.site_index(0, 2)
        exchange(small_ball, config, i, j)
        assert config.eta.sum() == small_ball.n_sites

    def test_exchange_non_neighbor(self, small_ball):
        config = sample_product_measure(small_ball, 0.5, seed=3)
        with pytest.raises(GeometryError):
            exchange(small_ball, config, small_ball.site_index(0, 1), small_ball.site_index(0, 3))


class TestProductMeasure:
    def test_all_ones(self, small_ball):
        config = sample_product_measure(small_ball, 1.0, seed=0)
        assert config.particle_count == small_ball.n_sites

    def test_mean_density(self):
        ball = build_ball(700.0, 0.9)  # ~1.1e5 sites
        config = sample_product_measure(ball, 0.5, seed=11)
        mean = config.particle_count / ball.n_sites
        sd = np.sqrt(0.25 / ball.n_sites)
        assert abs(mean - 0.5) < 3 * sd

    def test_seed_determinism(self, small_ball):
        a = sample_product_measure(small_ball, 0.37, seed=5)
        b = sample_product_measure(small_ball, 0.37, seed=5)
        assert np.array_equal(a.eta, b.eta)

    def test_tilt_origin_density(self, small_ball, lln_tilt):
        # origin inherits the innermost plateau value of the tilt
        g, _ = lln_tilt.site_tables(small_ball)
        assert g[small_ball.origin_index] == pytest.approx(0.25, abs=1e-12)


class TestTiltProfile:
    def test_logit_identity(self, small_ball, lln_tilt):
        g, G = lln_tilt.site_tables(small_ball)
        expect = 0.5 * (np.log(g / (1 - g)) - np.log(0.5 / 0.5))
        assert np.max(np.abs(G - expect)) < 1e-12

    def test_gamma_zero_beyond_half(self, small_ball, lln_tilt):
        _, G = lln_tilt.site_tables(small_ball)
        outer = small_ball.sigma >= 0.5
        assert np.max(np.abs(G[outer]), initial=0.0) == 0.0

    def test_constant_tilt_gamma_zero(self, small_ball):
        tilt = constant_tilt(0.5)
        _, G = tilt.site_tables(small_ball)
        assert np.max(np.abs(G)) == 0.0

    def test_eps_clamp(self):
        tilt = smoothstep_tilt(0.5, 0.9999999, 0.1, 0.3)
        assert tilt.gamma_at(0.0) == pytest.approx(1.0 - 1e-4)
        assert np.isfinite(tilt.Gamma_at(0.0))

    def test_derivatives_match_finite_differences(self, lln_tilt):
        rr = np.linspace(0.01, 0.45, 200)
        h = 1e-6
        fd1 = (lln_tilt.gamma(rr + h) - lln_tilt.gamma(rr - h)) / (2 * h)
        assert np.max(np.abs(fd1 - lln_tilt.dgamma(rr))) < 1e-6
        fd2 = (lln_tilt.gamma(rr + h) - 2 * lln_tilt.gamma(rr) + lln_tilt.gamma(rr - h)) / h ** 2
        assert np.max(np.abs(fd2 - lln_tilt.d2gamma(rr))) < 1e-3

    def test_grid_tilt_roundtrip(self):
        rr = np.linspace(0.0, 0.6, 61)
        base = smoothstep_tilt(0.5, 0.3, 0.1, 0.4)
        tilt = grid_tilt(0.5, rr, base.gamma(rr))
        probe = np.linspace(0.02, 0.58, 97)
        assert np.max(np.abs(tilt.gamma(probe) - base.gamma(probe))) < 5e-4

    def test_ramp_validation(self):
        with pytest.raises(ValueError):
            smoothstep_tilt(0.5, 0.3, 0.2, 0.1)
        with pytest.raises(ValueError):
            smoothstep_tilt(0.5, 0.3, 0.1, 0.7)
