"""Polar empirical measures, mollification, and the lattice comparison sums.

The polar measure of a configuration puts mass eta(x)/(2 pi |x|^2 log T) at
sigma_T(x) for every non-origin site; its time average replaces eta(x) by the
occupation time.  Atoms are kept sorted by sigma so compactly supported
integrands only visit their own window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .lattice import Configuration, LatticeBall, smoothstep, smoothstep_d1, smoothstep_d2
from .rates import RadialDensity

SUPPORT_MARGIN = 0.05  # test-function supports stay this far inside (0, r_max)


class SupportError(ValueError):
    """Test-function support escapes the controlled radial window."""


class WindowError(ValueError):
    """Polar window leaves the ball or contains no sites."""


# ---------------------------------------------------------------------------
# smooth compactly supported test functions

class Bump:
    """C^2 bump on [a, b]: quintic smoothstep up to 1 at the midpoint and back."""

    def __init__(self, a: float, b: float):
        if not a < b:
            raise ValueError("need a < b")
        self.a, self.b = float(a), float(b)

    @property
    def support(self):
        return (self.a, self.b)

    def _t(self, r):
        return (np.asarray(r, dtype=float) - self.a) / (self.b - self.a)

    def __call__(self, r):
        t = self._t(r)
        return np.where((t > 0) & (t < 1), smoothstep(2.0 * np.minimum(t, 1.0 - t)), 0.0)

    def deriv(self, r):
        t = self._t(r)
        u = 2.0 * np.minimum(t, 1.0 - t)
        du = np.where(t <= 0.5, 2.0, -2.0) / (self.b - self.a)
        return np.where((t > 0) & (t < 1), smoothstep_d1(u) * du, 0.0)

    def deriv2(self, r):
        t = self._t(r)
        u = 2.0 * np.minimum(t, 1.0 - t)
        du = np.where(t <= 0.5, 2.0, -2.0) / (self.b - self.a)
        return np.where((t > 0) & (t < 1), smoothstep_d2(u) * du * du, 0.0)

    def integral(self) -> float:
        mid = 0.5 * (self.a + self.b)
        val, _ = quad(self, self.a, self.b, points=[mid], limit=200)
        return float(val)


# ---------------------------------------------------------------------------
# mollifiers

@dataclass(frozen=True)
class Mollifier:
    """Box kernel phi_delta or its continuous trapezoid version psi_delta.

    psi equals phi on [-(d-d^2), d-d^2], is bounded by 1/(2d), ramps linearly
    to zero at +-(d+d^2), and integrates to one exactly.
    """

    delta: float
    kind: str = "continuous"

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError("mollifier width must lie in (0, 1/2)")
        if self.kind not in ("box", "continuous"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")

    @property
    def outer_support(self) -> float:
        d = self.delta
        return d if self.kind == "box" else d + d * d

    def __call__(self, s):
        d = self.delta
        s = np.abs(np.asarray(s, dtype=float))
        if self.kind == "box":
            return np.where(s <= d, 1.0 / (2.0 * d), 0.0)
        a, b = d - d * d, d + d * d
        ramp = (b - s) / (b - a) / (2.0 * d)
        return np.where(s <= a, 1.0 / (2.0 * d), np.where(s < b, ramp, 0.0))


# ---------------------------------------------------------------------------
# polar measures

class PolarMeasure:
    """Atomic measure on radial exponents, atoms sorted by sigma."""

    def __init__(self, sigma, weight, radius, r_max: float, log_T: float, kind: str):
        self.sigma = np.asarray(sigma, dtype=float)
        self.weight = np.asarray(weight, dtype=float)
        self.radius = np.asarray(radius, dtype=float)
        self.r_max = float(r_max)
        self.log_T = float(log_T)
        self.kind = kind
        self._cum = np.concatenate(([0.0], np.cumsum(self.weight)))

    @classmethod
    def _from_site_values(cls, ball: LatticeBall, values, kind: str) -> "PolarMeasure":
        order = ball.sigma_order
        w = (ball.weight * values)[order]
        keep = ball.weight[order] > 0.0  # drops the origin
        return cls(ball.sigma_sorted[keep], w[keep], np.sqrt(ball.r2[order][keep]),
                   ball.r_max, ball.log_T, kind)

    @classmethod
    def from_configuration(cls, ball: LatticeBall, config: Configuration) -> "PolarMeasure":
        return cls._from_site_values(ball, config.eta.astype(float), "instantaneous")

    @classmethod
    def from_occupation_times(cls, ball: LatticeBall, occ_time, horizon: float = 1.0,
                              replicas: int = 1) -> "PolarMeasure":
        scale = np.asarray(occ_time, dtype=float) / (horizon * replicas)
        return cls._from_site_values(ball, scale, "time-averaged")

    @classmethod
    def reference(cls, ball: LatticeBall) -> "PolarMeasure":
        """lambda_T, the polar measure of the all-ones configuration."""
        return cls._from_site_values(ball, np.ones(ball.n_sites), "lambda_T")

    @classmethod
    def linear_combination(cls, c1: float, m1: "PolarMeasure",
                           c2: float, m2: "PolarMeasure") -> "PolarMeasure":
        if not np.array_equal(m1.sigma, m2.sigma):
            raise ValueError("measures live on different atom sets")
        return cls(m1.sigma, c1 * m1.weight + c2 * m2.weight, m1.radius,
                   m1.r_max, m1.log_T, "combination")

    def total_mass(self) -> float:
        return float(self._cum[-1])

    def to_csv(self, path):
        with open(path, "w") as handle:
            handle.write("sigma,weight,radius\n")
            for s, w, r in zip(self.sigma, self.weight, self.radius):
                handle.write(f"{s:.17g},{w:.17g},{r:.17g}\n")

    def interval_mass(self, a: float, b: float) -> float:
        """Mass of [a, b]."""
        i = np.searchsorted(self.sigma, a, "left")
        j = np.searchsorted(self.sigma, b, "right")
        return float(self._cum[j] - self._cum[i])

    def window_sum(self, lo: float, hi: float, f: Callable) -> float:
        i = np.searchsorted(self.sigma, lo, "left")
        j = np.searchsorted(self.sigma, hi, "right")
        if i >= j:
            return 0.0
        return float(np.dot(self.weight[i:j], f(self.sigma[i:j])))


def polar_measure(ball: LatticeBall, config: Configuration) -> PolarMeasure:
    """Polar empirical measure of a configuration (origin excluded)."""
    return PolarMeasure.from_configuration(ball, config)


def integrate(measure: PolarMeasure, H: Bump) -> float:
    """Atom sum of a compactly supported test function against the measure."""
    a, b = H.support
    if a < SUPPORT_MARGIN or b > measure.r_max - SUPPORT_MARGIN:
        raise SupportError(
            f"support [{a}, {b}] escapes [{SUPPORT_MARGIN}, {measure.r_max - SUPPORT_MARGIN}]")
    return measure.window_sum(a, b, H)


def integrate_mollifier(measure: PolarMeasure, r: float, moll: Mollifier) -> float:
    """mu(psi_{r,delta}) (or the box kernel)."""
    w = moll.outer_support
    return measure.window_sum(r - w, r + w, lambda s: moll(s - r))


def mollified_density(measure: PolarMeasure, delta: float, grid,
                      kind: str = "continuous") -> RadialDensity:
    """m_delta(r) = mu(psi_{r,delta}) on a radial grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.min() < 2.0 * delta or grid.max() > measure.r_max - 2.0 * delta:
        raise SupportError(
            f"grid must stay inside [{2 * delta}, {measure.r_max - 2 * delta}]")
    moll = Mollifier(delta, kind)
    vals = np.array([integrate_mollifier(measure, r, moll) for r in grid])
    return RadialDensity(grid, vals)


# ---------------------------------------------------------------------------
# lattice comparison sums

def riemann_gap(ball: LatticeBall, H: Bump) -> float:
    """| (1/log T) sum H(sigma_x)/|x|^2  -  2 pi int H dr |."""
    lam = PolarMeasure.reference(ball)
    lattice_sum = 2.0 * np.pi * lam.window_sum(H.a, H.b, H)
    return float(abs(lattice_sum - 2.0 * np.pi * H.integral()))


def annulus_average(ball: LatticeBall, J: Bump, delta: float, site: int) -> float:
    """(1/(4 pi delta log T)) sum over the annulus |x| T^-delta <= |y| <= |x| T^delta."""
    s = float(ball.sigma[site])
    if s <= 2.0 * delta:
        raise WindowError(f"site sigma {s:.4f} must exceed 2 delta = {2 * delta}")
    if s + delta > ball.r_max:
        raise WindowError(f"annulus [{s - delta}, {s + delta}] leaves the ball")
    lam = PolarMeasure.reference(ball)
    return float(lam.window_sum(s - delta, s + delta, J) / (2.0 * delta))


@dataclass
class MesoscopicWindow:
    """Polar cube [r - iota_-, r + iota_+] x [theta - q, theta + q]."""

    r: float
    theta: float
    epsilon: float
    q_eps: float
    iota_plus: float
    iota_minus: float


def make_window(ball: LatticeBall, r: float, theta: float, epsilon: float,
                q: Optional[float] = None) -> MesoscopicWindow:
    if not epsilon < r:
        raise WindowError("window needs epsilon < r")
    T, logT = ball.T, ball.log_T
    if T ** r + T ** epsilon > ball.radius:
        raise WindowError("polar cube leaves the ball")
    q_eps = float(np.sqrt(epsilon)) if q is None else float(q)
    iota_plus = float(np.log1p(T ** (epsilon - r)) / logT)
    iota_minus = float(-np.log1p(-T ** (epsilon - r)) / logT)
    return MesoscopicWindow(r, theta, epsilon, q_eps, iota_plus, iota_minus)


def mesoscopic_average(ball: LatticeBall, config: Configuration,
                       window: MesoscopicWindow) -> float:
    """Weighted particle average over the mesoscopic polar cube."""
    lo = window.r - window.iota_minus
    hi = window.r + window.iota_plus
    i = np.searchsorted(ball.sigma_sorted, lo, "left")
    j = np.searchsorted(ball.sigma_sorted, hi, "right")
    sites = ball.sigma_order[i:j]
    if len(sites) == 0:
        raise WindowError("empty polar cube")
    ang = np.angle(np.exp(1j * (ball.theta[sites] - window.theta)))
    sites = sites[np.abs(ang) <= window.q_eps]
    if len(sites) == 0:
        raise WindowError("empty polar cube")
    norm = 2.0 * (window.iota_plus + window.iota_minus) * window.q_eps * ball.log_T
    return float(np.sum(config.eta[sites] / ball.r2[sites]) / norm)
