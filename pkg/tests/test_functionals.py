"""Trajectory functionals over exact accumulators."""

import numpy as np
import pytest

from polarssep.dynamics import DynamicsSpec, run_replicas, run_trajectory
from polarssep.functionals import (expected_w_gamma, summation_by_parts_residual,
                                   v_h_energy, v_h_parts, w_gamma, w_j_delta)
from polarssep.girsanov import expected_log_psi_dyn_scaled
from polarssep.lattice import (Configuration, build_ball, constant_tilt,
                               sample_product_measure)
from polarssep.measures import Bump
from polarssep.rates import mobility


class ZeroBump:
    a, b = 0.2, 0.4
    support = (0.2, 0.4)

    def __call__(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    deriv = __call__
    deriv2 = __call__


class NegatedBump:
    def __init__(self, H):
        self._H = H
        self.a, self.b = H.a, H.b

    def __call__(self, r):
        return -self._H(r)

    def deriv(self, r):
        return -self._H.deriv(r)


def frozen_all_ones_acc(ball):
    init = Configuration(np.ones(ball.n_sites, np.uint8))
    _, acc = run_trajectory(ball, DynamicsSpec(T=100.0, seed=0), init)
    assert acc.event_count == 0
    return acc


class TestWJDelta:
    def test_zero_test_function(self, small_ball):
        init = sample_product_measure(small_ball, 0.5, seed=1)
        _, acc = run_trajectory(small_ball, DynamicsSpec(T=100.0, seed=2), init)
        assert w_j_delta(small_ball, acc, ZeroBump(), 0.05, 0.5) == 0.0

    def test_frozen_all_ones_small(self):
        # disagreements vanish and sigma(m) ~ sigma(1) = 0 up to boundary slack
        ball = build_ball(1000.0, 0.55)
        acc = frozen_all_ones_acc(ball)
        val = w_j_delta(ball, acc, Bump(0.2, 0.35), 0.05, 0.5)
        assert abs(val) < 0.1

    def test_stationary_value_small(self):
        ball = build_ball(1000.0, 0.55)
        spec = DynamicsSpec(T=1000.0, tilt=None, seed=3)
        reps = run_replicas(ball, spec, 8, 0.5, workers=2)
        vals = [w_j_delta(ball, r.accumulator, Bump(0.2, 0.35), 0.05, 0.5) for r in reps]
        assert abs(np.mean(vals)) < 0.1


class TestVH:
    def test_zero_test_function(self, small_ball):
        init = sample_product_measure(small_ball, 0.5, seed=4)
        _, acc = run_trajectory(small_ball, DynamicsSpec(T=100.0, seed=5), init)
        assert v_h_energy(small_ball, acc, ZeroBump()) == 0.0

    def test_frozen_all_ones_exact_zero(self, small_ball):
        acc = frozen_all_ones_acc(small_ball)
        assert v_h_energy(small_ball, acc, Bump(0.2, 0.4)) == 0.0

    def test_sign_identity(self, small_ball):
        # V(-H) + V(H) = -2 * quadratic part, exactly
        init = sample_product_measure(small_ball, 0.5, seed=6)
        _, acc = run_trajectory(small_ball, DynamicsSpec(T=100.0, seed=7), init)
        H = Bump(0.2, 0.4)
        _, quad = v_h_parts(small_ball, acc, H)
        total = v_h_energy(small_ball, acc, H) + v_h_energy(small_ball, acc, NegatedBump(H))
        assert total == pytest.approx(-2.0 * quad, rel=1e-12)

    def test_exceedance_rare_at_stationarity(self):
        ball = build_ball(1000.0, 0.51)
        spec = DynamicsSpec(T=1000.0, tilt=None, seed=8)
        reps = run_replicas(ball, spec, 64, 0.5, workers=2)
        vals = np.array([v_h_energy(ball, r.accumulator, Bump(0.2, 0.35)) for r in reps])
        assert np.mean(vals >= 1.0) < 0.05


class TestSummationByParts:
    def test_zero_function(self, small_ball):
        config = sample_product_measure(small_ball, 0.5, seed=9)
        assert summation_by_parts_residual(small_ball, config, ZeroBump()) == 0.0

    def test_single_particle(self):
        ball = build_ball(100.0, 0.55)
        eta = np.zeros(ball.n_sites, np.uint8)
        eta[ball.site_index(7, 3)] = 1
        res = summation_by_parts_residual(ball, Configuration(eta), Bump(0.2, 0.5))
        assert res <= 100.0 ** -0.2

    def test_all_ones_decay(self):
        H = Bump(0.2, 0.4)
        res = []
        for T in (100.0, 1000.0):
            ball = build_ball(T, 0.51)
            config = Configuration(np.ones(ball.n_sites, np.uint8))
            res.append(summation_by_parts_residual(ball, config, H))
        assert res[1] < res[0]
        assert res[0] <= 5.0 * 100.0 ** -0.2


class TestWGamma:
    def test_constant_tilt_zero(self, small_ball):
        init = sample_product_measure(small_ball, 0.5, seed=10)
        _, acc = run_trajectory(small_ball, DynamicsSpec(T=100.0, seed=11), init)
        assert w_gamma(small_ball, acc, constant_tilt(0.5)) == 0.0

    def test_all_ones_zero(self, small_ball, lln_tilt):
        acc = frozen_all_ones_acc(small_ball)
        assert w_gamma(small_ball, acc, lln_tilt) == 0.0

    def test_nonnegative(self, small_ball, lln_tilt):
        init = sample_product_measure(small_ball, lln_tilt, seed=12)
        spec = DynamicsSpec(T=100.0, tilt=lln_tilt, seed=13)
        _, acc = run_trajectory(small_ball, spec, init)
        assert w_gamma(small_ball, acc, lln_tilt) >= 0.0

    def test_stationary_matches_exact_expectation(self, lln_tilt):
        # oracle: E[(eta(y)-eta(x))^2] = gamma_x(1-gamma_y) + gamma_y(1-gamma_x)
        # summed exactly over bonds
        ball = build_ball(1000.0, 0.51)
        target = expected_w_gamma(ball, lln_tilt)
        spec = DynamicsSpec(T=1000.0, tilt=lln_tilt, seed=14)
        reps = run_replicas(ball, spec, 16, lln_tilt, workers=2)
        mc = np.mean([w_gamma(ball, r.accumulator, lln_tilt) for r in reps])
        assert abs(mc - target) / target < 0.15

    def test_exact_sum_approaches_continuum(self, lln_tilt):
        # comparison of the exact bond sum with pi * int Gamma'^2 sigma(gamma)
        rr = np.linspace(0.0, 0.5, 20001)
        gp = lln_tilt.dGamma_at(rr)
        continuum = np.pi * np.trapezoid(gp ** 2 * mobility(lln_tilt.gamma_at(rr)), rr)
        gaps = []
        for T in (1e3, 1e4):
            ball = build_ball(T, 0.51)
            gaps.append(abs(expected_w_gamma(ball, lln_tilt) - continuum))
        assert gaps[1] < gaps[0]


class TestExpansionTargets:
    def test_scaled_dyn_expectation_matches_expansion(self, lln_tilt):
        # (log T/T) E[log Psi_dyn] vs -pi int Gamma'' gamma - E[W_gamma]
        ball = build_ball(10_000.0, 0.51)
        exact = expected_log_psi_dyn_scaled(ball, lln_tilt)
        rr = np.linspace(0.0, 0.55, 40001)
        gpp = lln_tilt.d2Gamma_at(rr)
        gam = lln_tilt.gamma_at(rr)
        term1 = -np.pi * np.trapezoid(gpp * gam, rr)
        term2 = -expected_w_gamma(ball, lln_tilt)
        assert abs(exact - (term1 + term2)) / abs(exact) < 0.15
