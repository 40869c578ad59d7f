"""Event engine: exactness, conservation, reproducibility, exact small checks."""

import numpy as np
import pytest

from polarssep.dynamics import (DynamicsSpec, RateOverflowError, StateSpaceError,
                                check_detailed_balance, bond_rate_factors,
                                dirichlet_form_exact, exact_sector_law,
                                run_replicas, run_trajectory,
                                stationary_check_small)
from polarssep.lattice import (Configuration, TiltProfile, build_ball, build_block,
                               random_smooth_tilt, sample_product_measure,
                               smoothstep_tilt)
from polarssep.rng import numpy_rng

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


# ---------------------------------------------------------------------------
# pure-python replay of the kernel's random stream: an independent
# re-implementation whose accumulators are recomputed from scratch each event

class PyXoshiro:
    def __init__(self, seed, replica):
        z = ((seed & MASK) * GOLDEN + (replica & MASK) * MIX1 + MIX2) & MASK
        self.s = []
        for _ in range(4):
            z = (z + GOLDEN) & MASK
            x = z
            x = ((x ^ (x >> 30)) * MIX1) & MASK
            x = ((x ^ (x >> 27)) * MIX2) & MASK
            self.s.append((x ^ (x >> 31)) & MASK)

    @staticmethod
    def _rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & MASK

    def next64(self):
        s = self.s
        res = (self._rotl((s[0] + s[3]) & MASK, 23) + s[0]) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self._rotl(s[3], 45)
        return res

    def u01(self):
        return (self.next64() >> 11) * (1.0 / 9007199254740992.0)


def reference_trajectory(ball, tilt, T, horizon, seed, replica, eta0):
    """Replays the kernel's decisions; every observable recomputed from scratch."""
    if tilt is None:
        acc_table = np.ones((ball.n_sites, 4))
        tilted = False
        cap = T / 2.0
        dynterm_f = np.zeros(ball.n_bonds)
        dynterm_b = np.zeros(ball.n_bonds)
    else:
        _, Gamma = tilt.site_tables(ball)
        nbr = ball.nbr
        dG = np.where(nbr >= 0, Gamma[np.clip(nbr, 0, None)] - Gamma[:, None], 0.0)
        g = float(np.abs(dG).max())
        acc_table = np.exp(dG - g)
        tilted = True
        cap = T / 2.0 * np.exp(g)
        dG_bond = Gamma[ball.bond_v] - Gamma[ball.bond_u]
        dynterm_f = np.expm1(dG_bond)
        dynterm_b = np.expm1(-dG_bond)
    rng = PyXoshiro(seed, replica)
    eta = eta0.astype(np.int64).copy()
    occ_list = [i for i in range(ball.n_sites) if eta[i] == 1]
    n_occ = len(occ_list)
    occ_time = np.zeros(ball.n_sites)
    disag = np.zeros(ball.n_bonds)
    signed = np.zeros(ball.n_bonds)
    dyn_integral = 0.0
    events = 0
    t = 0.0
    if 0 < n_occ < ball.n_sites:
        lam = 4.0 * cap * n_occ
        while True:
            dt = -np.log(1.0 - rng.u01()) / lam
            t_new = min(t + dt, horizon)
            span = t_new - t
            # from-scratch accumulation over the holding interval
            occ_time += eta * span
            du = eta[ball.bond_v] - eta[ball.bond_u]
            disag += (du != 0) * span
            signed += du * span
            active_f = (eta[ball.bond_u] == 1) & (eta[ball.bond_v] == 0)
            active_b = (eta[ball.bond_v] == 1) & (eta[ball.bond_u] == 0)
            dyn_integral += span * (dynterm_f[active_f].sum() + dynterm_b[active_b].sum())
            if t + dt >= horizon:
                t = horizon
                break
            t = t_new
            k = int(rng.u01() * n_occ)
            k = min(k, n_occ - 1)
            w = occ_list[k]
            q = min(int(rng.u01() * 4.0), 3)
            n = ball.nbr[w, q]
            if n < 0 or eta[n] == 1:
                continue
            if tilted and rng.u01() >= acc_table[w, q]:
                continue
            eta[w] = 0
            eta[n] = 1
            occ_list[k] = n
            events += 1
    else:
        occ_time += eta * horizon
        du = eta[ball.bond_v] - eta[ball.bond_u]
        disag += (du != 0) * horizon
        signed += du * horizon
        t = horizon
    return eta, occ_time, disag, signed, dyn_integral, events


class TestKernelAgainstReference:
    @pytest.mark.parametrize("tilted", [False, True])
    def test_bit_identical_bookkeeping(self, tiny_ball, tilted):
        T = 20.0
        tilt = smoothstep_tilt(0.5, 0.7, 0.05, 0.45) if tilted else None
        init = sample_product_measure(tiny_ball, 0.5, seed=42)
        spec = DynamicsSpec(T=T, tilt=tilt, seed=9, track_bonds=True)
        final, acc = run_trajectory(tiny_ball, spec, init, replica=3)
        eta, occ, disag, signed, dyn, events = reference_trajectory(
            tiny_ball, tilt, T, 1.0, 9, 3, init.eta)
        assert events == acc.event_count
        assert np.array_equal(eta.astype(np.uint8), final.eta)
        assert np.max(np.abs(occ - acc.occ_time)) < 1e-10
        assert np.max(np.abs(disag - acc.bond_disagreement)) < 1e-10
        assert np.max(np.abs(signed - acc.bond_signed)) < 1e-10
        if tilted:
            # incremental (lazy-flush) bookkeeping vs from-scratch recomputation
            assert acc.dyn_integral == pytest.approx(dyn, rel=1e-9)

    def test_medium_ball_reference(self, small_ball):
        tilt = smoothstep_tilt(0.5, 0.35, 0.08, 0.4)
        init = sample_product_measure(small_ball, tilt, seed=21)
        spec = DynamicsSpec(T=100.0, tilt=tilt, seed=13, track_bonds=True)
        final, acc = run_trajectory(small_ball, spec, init, replica=0)
        eta, occ, disag, signed, dyn, events = reference_trajectory(
            small_ball, tilt, 100.0, 1.0, 13, 0, init.eta)
        assert events == acc.event_count
        assert np.array_equal(eta.astype(np.uint8), final.eta)
        assert np.max(np.abs(occ - acc.occ_time)) < 1e-9
        assert acc.dyn_integral == pytest.approx(dyn, rel=1e-9)


class TestTrajectories:
    def test_all_ones_frozen(self, small_ball):
        init = Configuration(np.ones(small_ball.n_sites, np.uint8))
        spec = DynamicsSpec(T=100.0, tilt=None, seed=0)
        final, acc = run_trajectory(small_ball, spec, init)
        assert acc.event_count == 0
        assert np.all(acc.occ_time == 1.0)
        assert final.particle_count == small_ball.n_sites

    def test_untilted_dyn_integral_zero(self, small_ball):
        init = sample_product_measure(small_ball, 0.5, seed=1)
        spec = DynamicsSpec(T=50.0, tilt=None, seed=2)
        _, acc = run_trajectory(small_ball, spec, init)
        assert acc.dyn_integral == 0.0

    def test_particle_conservation(self, small_ball):
        init = sample_product_measure(small_ball, 0.3, seed=4)
        spec = DynamicsSpec(T=100.0, tilt=None, seed=5)
        final, acc = run_trajectory(small_ball, spec, init)
        assert final.particle_count == init.particle_count
        # total occupation time equals particle count exactly (conservation)
        assert acc.occ_time.sum() == pytest.approx(init.particle_count, rel=1e-12)

    def test_seed_reproducibility(self, small_ball):
        init = sample_product_measure(small_ball, 0.5, seed=6)
        spec = DynamicsSpec(T=100.0, tilt=None, seed=7)
        f1, a1 = run_trajectory(small_ball, spec, init)
        f2, a2 = run_trajectory(small_ball, spec, init)
        assert np.array_equal(f1.eta, f2.eta)
        assert np.array_equal(a1.occ_time, a2.occ_time)
        assert a1.event_count == a2.event_count

    def test_event_count_matches_mean_rate(self, small_ball):
        # stationary nu_alpha start: mean jump rate by direct summation is
        # (T/2) * sum over ordered occupied->empty pairs of alpha(1-alpha)
        T, alpha, n_rep = 100.0, 0.5, 32
        spec = DynamicsSpec(T=T, tilt=None, seed=31, track_bonds=False)
        reps = run_replicas(small_ball, spec, n_rep, alpha, workers=2)
        mean_events = np.mean([r.accumulator.event_count for r in reps])
        analytic = T / 2.0 * 2 * small_ball.n_bonds * alpha * (1 - alpha)
        assert abs(mean_events - analytic) / analytic < 0.2

    def test_mean_occupation_stationary(self, small_ball):
        alpha = 0.5
        spec = DynamicsSpec(T=100.0, tilt=None, seed=8, track_bonds=False)
        reps = run_replicas(small_ball, spec, 8, alpha, workers=2)
        means = [r.accumulator.occ_time.mean() for r in reps]
        sd = np.sqrt(alpha * (1 - alpha) / small_ball.n_sites)
        assert abs(np.mean(means) - alpha) < 3 * sd / np.sqrt(len(means))

    def test_accumulator_merge_additive(self, tiny_ball):
        spec = DynamicsSpec(T=20.0, tilt=None, seed=17)
        reps = run_replicas(tiny_ball, spec, 3, 0.5, workers=1)
        merged = reps[0].accumulator.merge(reps[1].accumulator).merge(reps[2].accumulator)
        assert merged.replicas == 3
        assert merged.event_count == sum(r.accumulator.event_count for r in reps)
        total = sum(r.accumulator.occ_time.sum() for r in reps)
        assert merged.occ_time.sum() == pytest.approx(total, rel=1e-12)

    def test_replica_worker_independence(self, tiny_ball):
        spec = DynamicsSpec(T=20.0, tilt=None, seed=12)
        serial = run_replicas(tiny_ball, spec, 4, 0.5, workers=1)
        parallel = run_replicas(tiny_ball, spec, 4, 0.5, workers=2)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.final.eta, b.final.eta)
            assert np.array_equal(a.accumulator.occ_time, b.accumulator.occ_time)

    def test_rate_overflow_diagnostic(self, tiny_ball):
        class StepTilt(TiltProfile):
            def gamma(self, r):
                return np.where(np.asarray(r, float) < 0.2, 1e-30, 1 - 1e-30)

            def dgamma(self, r):
                return np.zeros_like(np.asarray(r, float))

            d2gamma = dgamma

        tilt = StepTilt(0.5, eps=1e-32)
        init = sample_product_measure(tiny_ball, 0.5, seed=1)
        spec = DynamicsSpec(T=10.0, tilt=tilt, seed=1)
        with pytest.raises(RateOverflowError) as err:
            run_trajectory(tiny_ball, spec, init)
        assert "dGamma" in str(err.value)


class TestDetailedBalance:
    def test_constant_tilt_zero(self, small_ball):
        from polarssep.lattice import constant_tilt
        assert check_detailed_balance(small_ball, constant_tilt(0.5)) == 0.0

    def test_smooth_tilts_exact(self, small_ball):
        rng = numpy_rng(99)
        for _ in range(5):
            tilt = random_smooth_tilt(0.5, rng)
            assert check_detailed_balance(small_ball, tilt) <= 1e-12

    def test_corrupted_rate_detected(self, small_ball):
        tilt = smoothstep_tilt(0.5, 0.3, 0.1, 0.4)
        fwd, bwd = bond_rate_factors(small_ball, tilt)
        fwd = fwd.copy()
        fwd[small_ball.n_bonds // 2] *= 1.1
        violation = check_detailed_balance(small_ball, tilt, rate_factors=(fwd, bwd))
        assert 0.08 < violation < 0.11


class TestStationarySmall:
    def test_uniform_sector(self, block22):
        law_states, law = exact_sector_law(block22, None, 2, alpha=0.5)
        assert len(law) == 6
        assert np.allclose(law, 1.0 / 6.0)
        spec = DynamicsSpec(T=10.0, tilt=None, seed=3)
        tv = stationary_check_small(block22, spec, 2, min_events=1_000_000)
        assert tv < 0.02

    def test_tilted_sector(self, block22):
        tilt = smoothstep_tilt(0.5, 0.3, 0.05, 0.45)
        spec = DynamicsSpec(T=10.0, tilt=tilt, seed=4)
        tv = stationary_check_small(block22, spec, 2, min_events=1_000_000)
        assert tv < 0.02

    def test_k_zero_single_state(self, block22):
        spec = DynamicsSpec(T=10.0, tilt=None, seed=5)
        assert stationary_check_small(block22, spec, 0, min_events=1000) == 0.0

    def test_state_space_guard(self):
        ball = build_ball(100.0, 0.6)
        spec = DynamicsSpec(T=100.0, tilt=None, seed=0)
        with pytest.raises(StateSpaceError):
            stationary_check_small(ball, spec, 5)


class TestDirichletForm:
    def test_constant_function(self, block22):
        f = np.ones(1 << block22.n_sites)
        assert dirichlet_form_exact(block22, f, 0.5, T=8.0) == 0.0

    def test_two_site_occupation(self):
        # single bond {x, y}: (T/4) E[(eta_y - eta_x)^2] = (T/2) alpha (1-alpha)
        ball = build_block((1, 2), T=8.0)
        assert ball.n_bonds == 1
        alpha, T = 0.3, 8.0
        f = np.zeros(4)
        x0 = 0
        for mask in range(4):
            f[mask] = (mask >> x0) & 1
        value = dirichlet_form_exact(ball, f, alpha, T=T)
        assert value == pytest.approx(T / 2.0 * alpha * (1 - alpha), rel=1e-12)

    def test_quadratic_scaling(self, block22):
        rng = np.random.default_rng(0)
        f = rng.standard_normal(1 << block22.n_sites)
        e1 = dirichlet_form_exact(block22, f, 0.4, T=6.0)
        e2 = dirichlet_form_exact(block22, 2.0 * f, 0.4, T=6.0)
        assert e2 == pytest.approx(4.0 * e1, rel=1e-12)

    def test_state_space_guard(self, small_ball):
        with pytest.raises(StateSpaceError):
            dirichlet_form_exact(small_ball, np.zeros(8), 0.5)
