"""Acceptance suite: every primary criterion at its stated tolerance.

The full suite runs all eleven criteria; the fast suite is a smoke subset
that skips the three long simulation studies (law of large numbers, entropy
identity, superexponential trends) and runs the small-lattice stationarity
check with fewer events.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dynamics import DynamicsSpec, check_detailed_balance, bond_rate_factors, run_replicas, stationary_check_small
from .functionals import summation_by_parts_residual, v_h_energy, w_j_delta
from .girsanov import entropy_estimate, martingale_check
from .lattice import (Configuration, LatticeBall, build_ball, build_block,
                      random_smooth_tilt, smoothstep_tilt)
from .measures import Bump, PolarMeasure, mollified_density, riemann_gap
from .rates import (default_basis, energy_basis, energy_closed, hatI_basis,
                    mobility, sine_instanton_density, single_bump_basis, solve_instanton,
                    step_density, upsilon_closed)
from .rng import numpy_rng

DEFAULT_SEED = 20260811

LLN_TILT = dict(beta=0.25, r0=0.05, r1=0.30)   # low inner density keeps the
# desk-scale lattice bias of the mollified profile inside the 0.05 budget
MILD_TILT = dict(beta=0.53, r0=0.10, r1=0.30)  # importance weights stay
# estimable at 64 replicas: log-variance well below one

SBP_SCALED_BOUND = 5.0       # residual * T^0.2 bound, frozen from direct evaluation
RIEMANN_SCALED_BOUND = 0.05  # gap * T^0.2 bound, frozen from direct evaluation


@dataclass
class CriterionResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    skipped: bool = False

    @property
    def status(self) -> str:
        return "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")

    def line(self) -> str:
        keys = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"{self.status} {self.name} [{self.seconds:.1f}s] {keys}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)) and v and isinstance(v[0], float):
        return "[" + ", ".join(f"{x:.4g}" for x in v) + "]"
    return v


def _raw_ball(T: float, r_cut: float) -> LatticeBall:
    """Ball of radius floor(T^r_cut) without the (1/2,1) exponent guard.

    Used for observables whose integrands vanish above the cut (the Girsanov
    factors of a tilt supported in (0, r_cut)): their stationary expectations
    are products over sites inside the support, so the truncation radius only
    affects Monte Carlo noise.
    """
    radius = int(np.floor(T ** r_cut))
    n = radius
    g1, g2 = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    g1 = g1.ravel(); g2 = g2.ravel()
    keep = g1 * g1 + g2 * g2 <= radius * radius
    return LatticeBall(T, r_cut, g1[keep], g2[keep], radius)


def _lln_tilt(alpha: float = 0.5):
    return smoothstep_tilt(alpha, **LLN_TILT)


def _tilt_rate_I(tilt) -> float:
    """I_{Q,alpha}(gamma dr) = (pi/4) int_0^{1/2} gamma'^2/sigma(gamma) by quadrature."""
    rr = np.linspace(0.0, 0.5, 40001)
    gp = tilt.dgamma(rr)
    gv = tilt.gamma_at(rr)
    return float(np.pi / 4.0 * np.trapezoid(gp ** 2 / mobility(gv), rr))


# ---------------------------------------------------------------------------
# criteria

def criterion_instanton(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """1. Instanton value matches the closed-form rate on the density grid."""
    worst = 0.0
    slowest = 0.0
    for a10 in range(1, 10):
        for b10 in range(1, 10):
            alpha, beta = a10 / 10.0, b10 / 10.0
            t0 = time.perf_counter()
            res = solve_instanton(alpha, beta, 1024)
            dt = time.perf_counter() - t0
            target = upsilon_closed(alpha, beta)
            gap = abs(res.value - target) / max(target, 1e-6)
            worst = max(worst, gap)
            slowest = max(slowest, dt)
    passed = worst < 1e-3 and slowest < 10.0
    return CriterionResult("instanton-vs-closed-form", passed,
                           {"max_rel_gap": worst, "max_seconds": slowest})


def criterion_energy_basis(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """2. Basis supremum of the sine profile converges to pi^3/8 from below."""
    target = np.pi ** 3 / 8.0
    dens = sine_instanton_density(2049)
    closed = energy_closed(dens, "half_interval")
    vals = {n: energy_basis(dens, default_basis(n), "J_Q") for n in (8, 16, 32, 64)}
    seq = [vals[n] for n in (8, 16, 32, 64)]
    monotone = all(seq[i] <= seq[i + 1] + 1e-9 for i in range(3))
    within = abs(vals[64] - target) <= 0.01 * target
    below = all(v <= closed + 1e-9 for v in seq)
    return CriterionResult("energy-closed-vs-basis", monotone and within and below,
                           {"basis": seq, "closed": closed,
                            "rel_gap_64": (vals[64] - target) / target,
                            "monotone": monotone, "below_closed": below})


def criterion_remark_last_gap(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """3. Step density: interior basis sees zero, crossing bump diverges."""
    dens = step_density(0.9, 0.5, 2048)
    hat = energy_basis(dens, hatI_basis(16), "hatI")
    v_wide = energy_basis(dens, single_bump_basis(0.5, 0.1), "J_Q")
    v_narrow = energy_basis(dens, single_bump_basis(0.5, 0.01), "J_Q")
    passed = hat <= 1e-9 and v_narrow > 10.0 * v_wide
    return CriterionResult("remark-last-gap", passed,
                           {"hatI": hat, "bump_w0.1": v_wide, "bump_w0.01": v_narrow,
                            "ratio": v_narrow / v_wide})


def criterion_detailed_balance(seed=DEFAULT_SEED, workers=None,
                               corrupt: bool = False) -> CriterionResult:
    """4. nu_{T,gamma} reversibility of the tilted rates on a radius-15 ball."""
    ball = build_ball(100.0, 0.6)
    rng = numpy_rng(seed, 4)
    worst = 0.0
    for _ in range(5):
        tilt = random_smooth_tilt(0.5, rng)
        factors = None
        if corrupt:
            fwd, bwd = bond_rate_factors(ball, tilt)
            fwd = fwd.copy()
            fwd[len(fwd) // 2] *= 1.1
            factors = (fwd, bwd)
        worst = max(worst, check_detailed_balance(ball, tilt, rate_factors=factors))
    return CriterionResult("detailed-balance", worst <= 1e-12,
                           {"max_violation": worst, "radius": ball.radius})


def criterion_stationarity(seed=DEFAULT_SEED, workers=None,
                           min_events: int = 1_000_000) -> CriterionResult:
    """5. Four-site block, two particles: empirical law vs exact sector law."""
    ball = build_block((2, 2), T=10.0)
    spec_plain = DynamicsSpec(T=10.0, tilt=None, seed=seed)
    tv_plain = stationary_check_small(ball, spec_plain, k=2, min_events=min_events)
    tilt = smoothstep_tilt(0.5, 0.3, 0.05, 0.45)
    spec_tilt = DynamicsSpec(T=10.0, tilt=tilt, seed=seed + 1)
    tv_tilt = stationary_check_small(ball, spec_tilt, k=2, min_events=min_events)
    passed = tv_plain < 0.02 and tv_tilt < 0.02
    return CriterionResult("small-lattice-stationarity", passed,
                           {"tv_untilted": tv_plain, "tv_tilted": tv_tilt,
                            "events": min_events})


def criterion_lln(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """6. Mollified time-averaged density tracks the tilt profile at T=10^4."""
    t0 = time.perf_counter()
    T, delta, replicas = 1e4, 0.05, 16
    tilt = _lln_tilt()
    ball = build_ball(T, 0.55)
    spec = DynamicsSpec(T=T, tilt=tilt, seed=seed, track_bonds=False)
    reps = run_replicas(ball, spec, replicas, tilt, workers=workers)
    occ = np.sum([r.accumulator.occ_time for r in reps], axis=0)
    measure = PolarMeasure.from_occupation_times(ball, occ, 1.0, replicas)
    grid = np.round(np.arange(0.10, 0.4501, 0.01), 10)
    dens = mollified_density(measure, delta, grid)
    dev = np.abs(dens.values - tilt.gamma_at(grid))
    sup = float(dev.max())
    elapsed = time.perf_counter() - t0
    passed = sup < 0.05 and elapsed < 900.0
    return CriterionResult("lln-mollified-density", passed,
                           {"sup_dev": sup, "argmax_r": float(grid[dev.argmax()]),
                            "minutes": elapsed / 60.0}, seconds=elapsed)


def criterion_entropy(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """7. Entropy of the tilted path measure approaches -I_{Q,alpha}(gamma dr)."""
    tilt = _lln_tilt()
    I = _tilt_rate_I(tilt)
    discs = []
    values = []
    for T, reps in ((1e2, 64), (1e3, 32), (1e4, 16)):
        ball = _raw_ball(T, 0.42)
        est = entropy_estimate(ball, tilt, reps, T, seed=seed, workers=workers)
        values.append(est.value)
        discs.append(abs(est.value - (-I)))
    passed = discs[2] <= 0.25 * I and discs[0] > discs[1] > discs[2]
    return CriterionResult("entropy-lower-bound", passed,
                           {"estimates": values, "target": -I,
                            "discrepancies": discs})


def criterion_lambda_bound(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """8. lambda_T interval bound: fitted excess constant small and stable."""
    fitted = []
    r_max = 0.56
    width = 0.10
    lefts = np.linspace(0.02, r_max - width - 0.02, 50)
    for T in (1e2, 1e3, 1e4):
        ball = build_ball(T, r_max)
        lam = PolarMeasure.reference(ball)
        excess = np.array([lam.interval_mass(a, a + width) - width for a in lefts])
        fitted.append(float(excess.max() * ball.log_T))
    med = float(np.median(fitted))
    stable = all(0.5 * med <= c <= 1.5 * med for c in fitted)
    passed = all(c < 10.0 for c in fitted) and stable
    return CriterionResult("lambda-interval-bound", passed,
                           {"fitted_C": fitted, "stable": stable})


def criterion_sbp_riemann(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """9. Summation-by-parts residual and Riemann gap decay like T^{-0.2}."""
    H = Bump(0.2, 0.4)
    sbp, riem = [], []
    for T in (1e2, 1e3, 1e4):
        ball = build_ball(T, 0.51)
        config = Configuration(np.ones(ball.n_sites, np.uint8))
        sbp.append(summation_by_parts_residual(ball, config, H))
        riem.append(riemann_gap(ball, H))
    scaled_sbp = [r * T ** 0.2 for r, T in zip(sbp, (1e2, 1e3, 1e4))]
    scaled_riem = [r * T ** 0.2 for r, T in zip(riem, (1e2, 1e3, 1e4))]
    passed = (sbp[0] > sbp[1] > sbp[2] and riem[0] > riem[1] > riem[2]
              and max(scaled_sbp) <= SBP_SCALED_BOUND
              and max(scaled_riem) <= RIEMANN_SCALED_BOUND)
    return CriterionResult("sbp-riemann-decay", passed,
                           {"sbp": sbp, "riemann": riem,
                            "sbp_scaled": scaled_sbp, "riemann_scaled": scaled_riem})


def criterion_martingale(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """10. Change-of-measure identity E_alpha[exp(log RN)] = 1 within 3 SE."""
    ball = build_ball(100.0, 0.55)
    tilt = smoothstep_tilt(0.5, **MILD_TILT)
    check = martingale_check(ball, tilt, 64, 100.0, seed=seed, workers=workers)
    passed = abs(check.deviation_se) <= 3.0 and not check.unreliable
    return CriterionResult("martingale-identity", passed,
                           {"mean": check.mean, "stderr": check.stderr,
                            "deviation_se": check.deviation_se,
                            "unreliable": check.unreliable})


def criterion_superexp_trends(seed=DEFAULT_SEED, workers=None) -> CriterionResult:
    """11. One-sided two-blocks and energy statistics shrink from T=100 to 10^4."""
    J = Bump(0.2, 0.35)
    delta, replicas, alpha = 0.05, 16, 0.5
    w_upper, v_freq, w_mean = {}, {}, {}
    for T, r_max in ((1e2, 0.55), (1e4, 0.51)):
        ball = build_ball(T, r_max)
        spec = DynamicsSpec(T=T, tilt=None, seed=seed, track_bonds=True)
        reps = run_replicas(ball, spec, replicas, alpha, workers=workers)
        w_vals = np.array([w_j_delta(ball, r.accumulator, J, delta, alpha) for r in reps])
        v_vals = np.array([v_h_energy(ball, r.accumulator, J) for r in reps])
        w_upper[T] = float(np.maximum(w_vals, 0.0).mean())
        w_mean[T] = float(np.abs(w_vals.mean()))
        v_freq[T] = float(np.mean(v_vals >= 1.0))
    w_ok = w_upper[1e4] <= w_upper[1e2] and (w_upper[1e2] > 0.0 or w_mean[1e4] <= w_mean[1e2])
    v_ok = v_freq[1e4] <= v_freq[1e2]
    return CriterionResult("superexponential-trends", w_ok and v_ok,
                           {"w_upper_tail": [w_upper[1e2], w_upper[1e4]],
                            "w_abs_mean": [w_mean[1e2], w_mean[1e4]],
                            "v_exceed_freq": [v_freq[1e2], v_freq[1e4]]})


FULL_SUITE: List[tuple] = [
    ("instanton-vs-closed-form", criterion_instanton),
    ("energy-closed-vs-basis", criterion_energy_basis),
    ("remark-last-gap", criterion_remark_last_gap),
    ("detailed-balance", criterion_detailed_balance),
    ("small-lattice-stationarity", criterion_stationarity),
    ("lln-mollified-density", criterion_lln),
    ("entropy-lower-bound", criterion_entropy),
    ("lambda-interval-bound", criterion_lambda_bound),
    ("sbp-riemann-decay", criterion_sbp_riemann),
    ("martingale-identity", criterion_martingale),
    ("superexponential-trends", criterion_superexp_trends),
]

FAST_SKIP = {"lln-mollified-density", "entropy-lower-bound", "superexponential-trends"}


@dataclass
class SuiteReport:
    suite: str
    results: List[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed or r.skipped for r in self.results)

    def lines(self) -> List[str]:
        return [r.line() for r in self.results]

    def as_dict(self) -> dict:
        return {
            "schema": "polarssep-verify-1",
            "suite": self.suite,
            "passed": self.passed,
            "criteria": [
                {"name": r.name, "status": r.status, "seconds": r.seconds,
                 "details": {k: v for k, v in r.details.items()}}
                for r in self.results
            ],
        }


def run_suite(suite: str = "fast", seed: int = DEFAULT_SEED,
              workers: Optional[int] = None,
              inject_fault: Optional[str] = None) -> SuiteReport:
    """Run the acceptance criteria; `inject_fault` exists to test the tests."""
    if suite not in ("fast", "full"):
        raise ValueError(f"unknown suite {suite!r}")
    results = []
    for name, crit in FULL_SUITE:
        if suite == "fast" and name in FAST_SKIP:
            results.append(CriterionResult(name, True, {"reason": "fast suite"},
                                           skipped=True))
            continue
        kwargs = {}
        if crit is criterion_detailed_balance and inject_fault == "detailed-balance":
            kwargs["corrupt"] = True
        if suite == "fast" and crit is criterion_stationarity:
            kwargs["min_events"] = 200_000
        t0 = time.perf_counter()
        try:
            probe = crit(seed=seed, workers=workers, **kwargs)
        except Exception as exc:  # a crashed criterion is a failed criterion
            probe = CriterionResult(name, False,
                                    {"error": f"{type(exc).__name__}: {exc}"})
        probe.seconds = time.perf_counter() - t0
        results.append(probe)
    return SuiteReport(suite, results)
