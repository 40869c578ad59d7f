"""Trajectory functionals built from exact time-integrated accumulators.

Conventions: a bond is the directed pair (x, x + e_j); its lattice weight uses
the base site, x_j/|x|^2 for the linear terms and x_j^2/|x|^4 for the
quadratic ones.  Bonds based at the origin carry no weight (every admissible
test function vanishes at sigma = 0).
"""

from __future__ import annotations

import numpy as np

from .dynamics import TrajectoryAccumulator
from .lattice import Configuration, LatticeBall, TiltProfile
from .measures import Bump, PolarMeasure, mollified_density
from .rates import mobility


def _bond_weights(ball: LatticeBall):
    u = ball.bond_u
    xj = np.where(ball.bond_dir == 0, ball.x1[u], ball.x2[u]).astype(float)
    r2 = ball.r2[u]
    safe = r2 > 0
    lin = np.where(safe, xj / np.maximum(r2, 1.0), 0.0)
    quad = np.where(safe, xj * xj / np.maximum(r2, 1.0) ** 2, 0.0)
    return lin, quad


def time_averaged_measure(ball: LatticeBall, acc: TrajectoryAccumulator) -> PolarMeasure:
    return PolarMeasure.from_occupation_times(ball, acc.occ_time, acc.horizon, acc.replicas)


def averaged_mollified_profile(ball: LatticeBall, acc: TrajectoryAccumulator,
                               delta: float, alpha: float):
    """m_{delta,T}: the mollified time-averaged density below 1/2, alpha above.

    Returns a callable on radial exponents.
    """
    measure = time_averaged_measure(ball, acc)
    lo = 2.0 * delta
    hi = min(0.5, ball.r_max - 2.0 * delta)
    grid = np.linspace(lo, hi, 512)
    dens = mollified_density(measure, delta, grid)

    def profile(r):
        r = np.asarray(r, dtype=float)
        inner = np.interp(r, dens.grid, dens.values)
        return np.where(r >= 0.5, alpha, inner)

    return profile


def w_j_delta(ball: LatticeBall, acc: TrajectoryAccumulator, J: Bump,
              delta: float, alpha: float) -> float:
    """Time integral of the two-blocks comparison functional.

    Bond-disagreement part minus twice the mobility of the mollified density,
    the latter evaluated from the time-averaged measure (storing the full
    mollified-density trajectory is not required for the one-sided probe:
    by concavity of the mobility the time-averaged form only lowers the
    statistic).
    """
    reps = acc.replicas
    _, quad = _bond_weights(ball)
    ju = J(ball.sigma[ball.bond_u])
    disag_part = float(np.sum(ju * quad * acc.bond_disagreement)) / (ball.log_T * reps)

    profile = averaged_mollified_profile(ball, acc, delta, alpha)
    js = J(ball.sigma)
    mask = (js != 0.0) & (ball.weight > 0.0)
    sig_vals = mobility(profile(ball.sigma[mask]))
    site_part = 2.0 * float(np.sum(js[mask] * sig_vals / ball.r2[mask])) / ball.log_T
    return disag_part - site_part


def v_h_parts(ball: LatticeBall, acc: TrajectoryAccumulator, H: Bump):
    """(linear, quadratic) pieces of the energy observable."""
    reps = acc.replicas
    lin_w, quad_w = _bond_weights(ball)
    hu = H(ball.sigma[ball.bond_u])
    linear = float(np.sum(lin_w * hu * acc.bond_signed)) / reps
    quadratic = float(np.sum(quad_w * hu * hu * acc.bond_disagreement)) / (ball.log_T * reps)
    return linear, quadratic


def v_h_energy(ball: LatticeBall, acc: TrajectoryAccumulator, H: Bump) -> float:
    """Linear-minus-quadratic energy observable, time integrated."""
    linear, quadratic = v_h_parts(ball, acc, H)
    return linear - quadratic


def summation_by_parts_residual(ball: LatticeBall, config: Configuration, H: Bump) -> float:
    """|sum_bonds (x_j/|x|^2) H(sigma_x) [eta(x+e_j) - eta(x)] + 2 pi int H' dmu|."""
    lin_w, _ = _bond_weights(ball)
    hu = H(ball.sigma[ball.bond_u])
    diff = config.eta[ball.bond_v].astype(float) - config.eta[ball.bond_u].astype(float)
    lattice = float(np.sum(lin_w * hu * diff))
    mu = PolarMeasure.from_configuration(ball, config)
    gradient_term = 2.0 * np.pi * mu.window_sum(H.a, H.b, H.deriv)
    return abs(lattice + gradient_term)


def w_gamma(ball: LatticeBall, acc: TrajectoryAccumulator, tilt: TiltProfile) -> float:
    """(1/(4 log T)) sum_bonds Gamma'(sigma_x)^2 (x_j^2/|x|^4) disagreement."""
    reps = acc.replicas
    _, quad_w = _bond_weights(ball)
    gp = tilt.dGamma_at(ball.sigma[ball.bond_u])
    return float(np.sum(gp * gp * quad_w * acc.bond_disagreement)) / (4.0 * ball.log_T * reps)


def expected_w_gamma(ball: LatticeBall, tilt: TiltProfile) -> float:
    """Exact stationary expectation of the quadratic tilt functional under
    nu_{T,gamma}: E[(eta(y)-eta(x))^2] = gamma_x(1-gamma_y) + gamma_y(1-gamma_x)."""
    gamma, _ = tilt.site_tables(ball)
    gu, gv = gamma[ball.bond_u], gamma[ball.bond_v]
    e_disag = gu * (1.0 - gv) + gv * (1.0 - gu)
    _, quad_w = _bond_weights(ball)
    gp = tilt.dGamma_at(ball.sigma[ball.bond_u])
    return float(np.sum(gp * gp * quad_w * e_disag)) / (4.0 * ball.log_T)
