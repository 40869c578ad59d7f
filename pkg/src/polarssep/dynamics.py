"""Continuous-time simulation of the plain and tilted exclusion dynamics.

Rates: a particle at x jumps to an empty neighbor y at rate
(T/2) exp{Gamma(y) - Gamma(x)}; Gamma = 0 in the untilted case.  The boundary
of the ball is closed.  Time integrals of occupations and bond disagreements
are exact (piecewise constant between events, weighted by holding times).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, List

import numpy as np

from ._kernel import run_kernel
from .lattice import Configuration, GeometryError, LatticeBall, TiltProfile, sample_product_measure
from .rng import stream_state

MAX_DGAMMA = 30.0  # |Gamma(y)-Gamma(x)| beyond this overflows exp at double precision


class RateOverflowError(ValueError):
    """Tilt gradient too steep for finite jump rates."""


class StateSpaceError(ValueError):
    """Exact enumeration requested on a state space that is too large."""


@dataclass
class DynamicsSpec:
    T: float
    tilt: Optional[TiltProfile] = None
    time_horizon: float = 1.0
    seed: int = 0
    track_bonds: bool = True


@dataclass
class TrajectoryAccumulator:
    """Exact time integrals over one trajectory (or a sum of replicas)."""

    occ_time: np.ndarray
    bond_disagreement: np.ndarray          # per bond, int_0^1 [eta(v)-eta(u)]^2 dt
    bond_signed: np.ndarray                # per bond, int_0^1 [eta(v)-eta(u)] dt
    origin_occupation: float
    dyn_integral: float                    # int_0^1 sum_bonds eta(x)(1-eta(y))(e^{dGamma}-1) dt
    event_count: int
    attempt_count: int
    horizon: float
    replicas: int = 1

    def merge(self, other: "TrajectoryAccumulator") -> "TrajectoryAccumulator":
        return TrajectoryAccumulator(
            occ_time=self.occ_time + other.occ_time,
            bond_disagreement=self.bond_disagreement + other.bond_disagreement,
            bond_signed=self.bond_signed + other.bond_signed,
            origin_occupation=self.origin_occupation + other.origin_occupation,
            dyn_integral=self.dyn_integral + other.dyn_integral,
            event_count=self.event_count + other.event_count,
            attempt_count=self.attempt_count + other.attempt_count,
            horizon=self.horizon,
            replicas=self.replicas + other.replicas,
        )


def bond_rate_factors(ball: LatticeBall, tilt: Optional[TiltProfile]):
    """Per-bond (forward, backward) rate factors e^{dGamma}; ones when untilted."""
    if tilt is None:
        ones = np.ones(ball.n_bonds)
        return ones, ones.copy()
    _, Gamma = tilt.site_tables(ball)
    with np.errstate(invalid="ignore"):
        dG = Gamma[ball.bond_v] - Gamma[ball.bond_u]
    worst = float(np.abs(dG).max(initial=0.0))
    if not np.isfinite(worst) or worst > MAX_DGAMMA:
        raise RateOverflowError(f"max |dGamma| = {worst:.3f} exceeds {MAX_DGAMMA}")
    return np.exp(dG), np.exp(-dG)


def dyn_integral_from_bonds(ball: LatticeBall, tilt: Optional[TiltProfile],
                            disag: np.ndarray, signed: np.ndarray) -> float:
    """Exact Girsanov dynamical integral from per-bond occupancy times.

    The directed pair u->v is active exactly when eta(v)-eta(u) = -1, so its
    occupancy time is (disagreement - signed)/2, and symmetrically for v->u.
    """
    if tilt is None:
        return 0.0
    fwd, bwd = bond_rate_factors(ball, tilt)
    t_uv = 0.5 * (disag - signed)
    t_vu = 0.5 * (disag + signed)
    return float(np.sum((fwd - 1.0) * t_uv + (bwd - 1.0) * t_vu))


def _acceptance_table(ball: LatticeBall, tilt: Optional[TiltProfile], T: float):
    """(S,4) acceptance probabilities and the uniformization cap."""
    if tilt is None:
        return np.ones((ball.n_sites, 4)), T / 2.0, False
    _, Gamma = tilt.site_tables(ball)
    nbr = ball.nbr
    with np.errstate(invalid="ignore"):  # inf - inf at clamp extremes -> caught below
        dG = np.where(nbr >= 0, Gamma[np.clip(nbr, 0, None)] - Gamma[:, None], 0.0)
    g = float(np.abs(dG).max(initial=0.0))
    if not np.isfinite(g) or g > MAX_DGAMMA:
        raise RateOverflowError(f"max |dGamma| = {g:.3f} exceeds {MAX_DGAMMA}")
    acc = np.exp(dG - g)
    cap = T / 2.0 * np.exp(g)
    return acc, cap, True


def run_trajectory(ball: LatticeBall, spec: DynamicsSpec, initial: Configuration,
                   replica: int = 0, state_time: Optional[np.ndarray] = None):
    """Simulate one trajectory; returns (final configuration, accumulator)."""
    if len(initial.eta) != ball.n_sites:
        raise GeometryError("configuration does not match the ball")
    acc_table, cap, tilted = _acceptance_table(ball, spec.tilt, spec.T)
    eta = initial.eta.copy()
    occ_time = np.zeros(ball.n_sites)
    last_site = np.zeros(ball.n_sites)
    disag = np.zeros(ball.n_bonds)
    signed = np.zeros(ball.n_bonds)
    last_bond = np.zeros(ball.n_bonds)
    track_states = state_time is not None
    if not track_states:
        state_time = np.zeros(1)
    rstate = stream_state(spec.seed, replica)
    events, attempts = run_kernel(
        eta, ball.nbr, ball.site_bonds, ball.bond_u, ball.bond_v,
        acc_table, tilted, cap, spec.time_horizon,
        spec.track_bonds, occ_time, last_site, disag, signed, last_bond,
        state_time, track_states, rstate)
    dyn = dyn_integral_from_bonds(ball, spec.tilt, disag, signed) if spec.track_bonds else float("nan")
    origin_occ = float(occ_time[ball.origin_index]) if ball.origin_index >= 0 else 0.0
    accumulator = TrajectoryAccumulator(
        occ_time=occ_time, bond_disagreement=disag, bond_signed=signed,
        origin_occupation=origin_occ, dyn_integral=dyn,
        event_count=int(events), attempt_count=int(attempts), horizon=spec.time_horizon)
    return Configuration(eta), accumulator


@dataclass
class ReplicaResult:
    replica: int
    initial: Configuration
    final: Configuration
    accumulator: TrajectoryAccumulator


_WORKER_CTX = {}


def _init_worker(ball, spec, profile):
    _WORKER_CTX["ball"] = ball
    _WORKER_CTX["spec"] = spec
    _WORKER_CTX["profile"] = profile


def _run_one(replica: int) -> ReplicaResult:
    ball = _WORKER_CTX["ball"]
    spec = _WORKER_CTX["spec"]
    profile = _WORKER_CTX["profile"]
    initial = sample_product_measure(ball, profile, spec.seed, replica)
    final, acc = run_trajectory(ball, spec, initial, replica)
    return ReplicaResult(replica, initial, final, acc)


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))


def run_replicas(ball: LatticeBall, spec: DynamicsSpec, n_replicas: int,
                 initial_profile, workers: Optional[int] = None) -> List[ReplicaResult]:
    """Independent replicas started from the given product measure.

    Replica r uses the random stream (seed, r) for both its initial
    configuration and its trajectory, so results are reproducible and
    independent of the worker count.
    """
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or n_replicas == 1:
        _init_worker(ball, spec, initial_profile)
        return [_run_one(r) for r in range(n_replicas)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(ball, spec, initial_profile)) as pool:
        return list(pool.map(_run_one, range(n_replicas)))


# ---------------------------------------------------------------------------
# exact small-scale checks

def check_detailed_balance(ball: LatticeBall, tilt: TiltProfile,
                           rate_factors=None) -> float:
    """Max relative violation of nu_{T,gamma}(eta) rate(eta -> eta') symmetry.

    rate_factors overrides the (forward, backward) factor pair per bond, which
    lets tests inject a corrupted rate.
    """
    gamma, _ = tilt.site_tables(ball)
    fwd, bwd = bond_rate_factors(ball, tilt) if rate_factors is None else rate_factors
    gu = gamma[ball.bond_u]
    gv = gamma[ball.bond_v]
    lhs = gu * (1.0 - gv) * fwd   # measure-weighted flux u -> v
    rhs = gv * (1.0 - gu) * bwd   # measure-weighted flux v -> u
    scale = np.maximum(np.maximum(lhs, rhs), 1e-300)
    return float(np.max(np.abs(lhs - rhs) / scale))


def _sector_states(n_sites: int, k: int):
    states = []
    for occ in combinations(range(n_sites), k):
        mask = 0
        for i in occ:
            mask |= 1 << i
        states.append(mask)
    return np.array(states, dtype=np.int64)


def exact_sector_law(ball: LatticeBall, tilt: Optional[TiltProfile], k: int, alpha: float):
    """Invariant law on the k-particle sector by direct enumeration."""
    if ball.n_sites > 20:
        raise StateSpaceError(f"{ball.n_sites} sites is too many for enumeration")
    from scipy.special import comb
    if comb(ball.n_sites, k) > 1e4:
        raise StateSpaceError("sector larger than 10^4 states")
    dens = tilt.site_tables(ball)[0] if tilt is not None else np.full(ball.n_sites, alpha)
    states = _sector_states(ball.n_sites, k)
    bits = (states[:, None] >> np.arange(ball.n_sites)[None, :]) & 1
    logw = bits @ np.log(dens) + (1 - bits) @ np.log(1.0 - dens)
    w = np.exp(logw - logw.max())
    return states, w / w.sum()


def stationary_check_small(ball: LatticeBall, spec: DynamicsSpec, k: int,
                           min_events: int = 1_000_000) -> float:
    """Total-variation distance of the empirical state-occupation law from the
    exact invariant law on the k-particle sector."""
    states, law = exact_sector_law(ball, spec.tilt, k, alpha=0.5 if spec.tilt is None else spec.tilt.alpha)
    rng = np.random.default_rng(spec.seed)
    occ = rng.choice(ball.n_sites, size=k, replace=False)
    eta = np.zeros(ball.n_sites, np.uint8)
    eta[occ] = 1
    state_time = np.zeros(1 << ball.n_sites)
    config = Configuration(eta)
    total_events = 0
    chunk = 0
    while total_events < min_events:
        run_spec = DynamicsSpec(T=spec.T, tilt=spec.tilt, time_horizon=spec.time_horizon,
                                seed=spec.seed, track_bonds=False)
        config, acc = run_trajectory(ball, run_spec, config, replica=chunk, state_time=state_time)
        total_events += acc.event_count
        chunk += 1
        if acc.event_count == 0:
            break  # frozen sector (k = 0 or full lattice)
    total_time = state_time.sum()
    emp = state_time[states] / total_time
    off_sector = 1.0 - emp.sum()
    return float(0.5 * (np.abs(emp - law).sum() + abs(off_sector)))


def dirichlet_form_exact(ball: LatticeBall, f_table: np.ndarray, alpha: float,
                         T: Optional[float] = None) -> float:
    """(T/4) sum_bonds int [f(eta^swap) - f(eta)]^2 dnu_alpha by enumeration."""
    S = ball.n_sites
    if S > 20:
        raise StateSpaceError(f"{S} sites is too many for enumeration")
    f_table = np.asarray(f_table, dtype=float)
    if len(f_table) != (1 << S):
        raise ValueError(f"f table must have 2^{S} entries")
    T = ball.T if T is None else T
    states = np.arange(1 << S, dtype=np.int64)
    ones = np.bitwise_count(states.astype(np.uint64)).astype(np.int64)
    nu = alpha ** ones * (1.0 - alpha) ** (S - ones)
    total = 0.0
    for b in range(ball.n_bonds):
        u, v = int(ball.bond_u[b]), int(ball.bond_v[b])
        bit_u = (states >> u) & 1
        bit_v = (states >> v) & 1
        differ = bit_u != bit_v
        swapped = states ^ ((1 << u) | (1 << v))
        df = np.where(differ, f_table[swapped] - f_table, 0.0)
        total += float(np.sum(nu * df * df))
    return T / 4.0 * total
