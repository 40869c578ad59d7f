"""Radon-Nikodym factorization of the tilted dynamics along trajectories.

log dP_{T,gamma}/dP_alpha = log Psi_stat + log Psi_pot + log Psi_dyn with the
initial-state, potential, and dynamical-corrector parts.  The factorization is
exact for the finite closed ball, so the change-of-measure identity
E_alpha[exp(log RN)] = 1 holds at every scale; the entropy identity
(log T/T) E_{T,gamma}[log dP_alpha/dP_{T,gamma}] -> -I_{Q,alpha}(gamma dr) is
asymptotic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .dynamics import (DynamicsSpec, ReplicaResult, TrajectoryAccumulator,
                       dyn_integral_from_bonds, run_replicas)
from .lattice import Configuration, LatticeBall, TiltProfile


@dataclass
class GirsanovBreakdown:
    log_psi_stat: float
    log_psi_pot: float
    log_psi_dyn: float
    log_rn_total: float
    scaled_total: float

    @classmethod
    def assemble(cls, stat: float, pot: float, dyn: float, T: float) -> "GirsanovBreakdown":
        total = stat + pot + dyn
        return cls(stat, pot, dyn, total, np.log(T) / T * total)


def log_psi_stat(ball: LatticeBall, tilt: TiltProfile, eta0: Configuration) -> float:
    """Initial-state likelihood ratio log d nu_{T,gamma}/d nu_alpha (eta0)."""
    gamma, _ = tilt.site_tables(ball)
    a = tilt.alpha
    active = np.abs(gamma - a) > 1e-15
    if not active.any():
        return 0.0
    g = gamma[active]
    bits = eta0.eta[active].astype(float)
    return float(np.sum(bits * np.log(g / a) + (1.0 - bits) * np.log((1.0 - g) / (1.0 - a))))


def log_psi_pot(ball: LatticeBall, tilt: TiltProfile,
                eta0: Configuration, eta1: Configuration) -> float:
    """Potential part sum_x Gamma_T(x) (eta_1(x) - eta_0(x))."""
    _, Gamma = tilt.site_tables(ball)
    return float(np.dot(Gamma, eta1.eta.astype(float) - eta0.eta.astype(float)))


def log_psi_dyn(acc: TrajectoryAccumulator, T: float) -> float:
    """Dynamical corrector -(T/2) int sum eta(x)(1-eta(y))(e^{dGamma} - 1)."""
    return -T / 2.0 * acc.dyn_integral


def replica_breakdown(ball: LatticeBall, tilt: TiltProfile, rep: ReplicaResult,
                      T: float) -> GirsanovBreakdown:
    stat = log_psi_stat(ball, tilt, rep.initial)
    pot = log_psi_pot(ball, tilt, rep.initial, rep.final)
    # the dyn integral is always re-evaluated under the tilt being scored;
    # the trajectory may have been generated by a different (or no) tilt
    acc = rep.accumulator
    dyn_int = dyn_integral_from_bonds(ball, tilt, acc.bond_disagreement, acc.bond_signed)
    return GirsanovBreakdown.assemble(stat, pot, -T / 2.0 * dyn_int, T)


# ---------------------------------------------------------------------------
# exact stationary expectations (targets for the Monte Carlo checks)

def expected_log_psi_dyn_scaled(ball: LatticeBall, tilt: TiltProfile) -> float:
    """(log T/T) E_{nu_{T,gamma}}[log Psi_dyn], by direct product-measure sums."""
    gamma, Gamma = tilt.site_tables(ball)
    gu, gv = gamma[ball.bond_u], gamma[ball.bond_v]
    dG = Gamma[ball.bond_v] - Gamma[ball.bond_u]
    pair = gu * (1.0 - gv) * np.expm1(dG) + gv * (1.0 - gu) * np.expm1(-dG)
    return -ball.log_T / 2.0 * float(pair.sum())


def expected_entropy_estimate(ball: LatticeBall, tilt: TiltProfile) -> float:
    """Exact mean of the entropy estimator on this ball (potential part has
    zero stationary mean)."""
    gamma, _ = tilt.site_tables(ball)
    a = tilt.alpha
    kl = float(np.sum(gamma * np.log(gamma / a) + (1.0 - gamma) * np.log((1.0 - gamma) / (1.0 - a))))
    return -(ball.log_T / ball.T * kl + expected_log_psi_dyn_scaled(ball, tilt))


# ---------------------------------------------------------------------------
# Monte Carlo estimates

@dataclass
class EntropyEstimate:
    value: float           # mean of -scaled_total, estimating -I_{Q,alpha}(gamma dr)
    stderr: float
    replicas: int
    breakdowns: List[GirsanovBreakdown]


def entropy_estimate(ball: LatticeBall, tilt: TiltProfile, replicas: int, T: float,
                     seed: int = 0, workers: Optional[int] = None) -> EntropyEstimate:
    """Monte Carlo mean of -(log T/T) log dP_{T,gamma}/dP_alpha under P_{T,gamma}."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a standard error")
    spec = DynamicsSpec(T=T, tilt=tilt, seed=seed, track_bonds=True)
    reps = run_replicas(ball, spec, replicas, tilt, workers=workers)
    downs = [replica_breakdown(ball, tilt, rep, T) for rep in reps]
    vals = np.array([-d.scaled_total for d in downs])
    return EntropyEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(replicas)),
                           replicas, downs)


@dataclass
class MartingaleCheck:
    mean: float
    stderr: float
    deviation_se: float    # (mean - 1)/stderr
    replicas: int
    unreliable: bool       # variance blow-up: the estimate carries no information
    breakdowns: List[GirsanovBreakdown]


def martingale_check(ball: LatticeBall, tilt: TiltProfile, replicas: int, T: float,
                     seed: int = 0, workers: Optional[int] = None) -> MartingaleCheck:
    """E_alpha[exp(log dP_{T,gamma}/dP_alpha)] should equal 1 exactly.

    Trajectories are sampled under the plain dynamics from nu_alpha; the tilt
    enters only through the evaluated Radon-Nikodym factors.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a standard error")
    spec = DynamicsSpec(T=T, tilt=None, seed=seed, track_bonds=True)
    reps = run_replicas(ball, spec, replicas, tilt.alpha, workers=workers)
    downs = [replica_breakdown(ball, tilt, rep, T) for rep in reps]
    logs = np.array([d.log_rn_total for d in downs])
    weights = np.exp(logs)
    mean = float(weights.mean())
    se = float(weights.std(ddof=1) / np.sqrt(replicas))
    # sample-based errors cannot see unsampled tails: bound the relative error
    # of the mean by the lognormal prediction from the well-sampled log variance
    v_log = float(logs.var(ddof=1))
    predicted_rel_se = float(np.sqrt(max(np.expm1(v_log), 0.0) / replicas))
    unreliable = predicted_rel_se > 0.5
    dev = (mean - 1.0) / se if se > 0 else 0.0
    return MartingaleCheck(mean, se, float(dev), replicas, unreliable, downs)
