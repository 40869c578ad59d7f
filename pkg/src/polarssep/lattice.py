"""Finite lattice geometry, radial coordinates, configurations, product measures.

Sites live on the square lattice ball {x : |x| <= floor(T^r_max)} together with
the origin.  The radial coordinate of a non-origin site is
``sigma = log|x| / log T``; the origin is assigned sigma = 0, which makes
radial profiles extend continuously to it (it inherits the innermost plateau
value of any tilt).  Jumps across the ball boundary are disabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import CubicSpline


class SizingError(ValueError):
    """Requested lattice exceeds the configured site budget."""


class GeometryError(ValueError):
    """Operation on sites that violates lattice geometry."""


# ---------------------------------------------------------------------------
# smooth helpers (quintic smoothstep: C^2 with vanishing first two derivatives
# at both ends)

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def smoothstep_d1(t):
    tc = np.clip(t, 0.0, 1.0)
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 30.0 * tc ** 2 * (1.0 - tc) ** 2, 0.0)


def smoothstep_d2(t):
    tc = np.clip(t, 0.0, 1.0)
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc), 0.0)


# ---------------------------------------------------------------------------
# lattice ball

@dataclass
class PolarCoords:
    radius: float
    sigma: float
    theta: float  # angle in [-pi, pi)


class LatticeBall:
    """Immutable lattice geometry shared by all modules.

    Sites are ordered lexicographically by (x1, x2); bonds are the directed
    nearest-neighbor pairs (x, x + e_j), j in {1, 2}, with both endpoints in
    the ball, one record per undirected bond.
    """

    def __init__(self, T: float, r_max: float, x1, x2, radius: int):
        self.T = float(T)
        self.r_max = float(r_max)
        self.radius = int(radius)
        self.log_T = float(np.log(T))
        self.x1 = np.ascontiguousarray(x1, dtype=np.int32)
        self.x2 = np.ascontiguousarray(x2, dtype=np.int32)
        self.n_sites = len(self.x1)

        r2 = self.x1.astype(np.int64) ** 2 + self.x2.astype(np.int64) ** 2
        self.r2 = r2.astype(np.float64)
        with np.errstate(divide="ignore"):
            self.sigma = np.where(r2 > 0, 0.5 * np.log(np.maximum(self.r2, 1.0)) / self.log_T, 0.0)
        # polar atom weight 1/(2 pi |x|^2 log T); zero at the origin, which
        # keeps the origin out of every polar sum without special-casing
        self.weight = np.where(r2 > 0, 1.0 / (2.0 * np.pi * np.maximum(self.r2, 1.0) * self.log_T), 0.0)
        self.theta = np.arctan2(self.x2, self.x1)
        self.theta[self.theta >= np.pi] = -np.pi

        origin = np.nonzero(r2 == 0)[0]
        self.origin_index = int(origin[0]) if len(origin) else -1

        self._build_adjacency()
        self.sigma_order = np.argsort(self.sigma, kind="stable").astype(np.int64)
        self.sigma_sorted = self.sigma[self.sigma_order]

    def _build_adjacency(self):
        x1, x2 = self.x1, self.x2
        lo1, lo2 = int(x1.min()), int(x2.min())
        n1 = int(x1.max()) - lo1 + 1
        n2 = int(x2.max()) - lo2 + 1
        grid = np.full((n1 + 2, n2 + 2), -1, dtype=np.int32)
        grid[x1 - lo1 + 1, x2 - lo2 + 1] = np.arange(self.n_sites, dtype=np.int32)
        self._grid = grid
        self._grid_lo = (lo1, lo2)

        nbr = np.empty((self.n_sites, 4), dtype=np.int32)
        shifts = ((1, 0), (0, 1), (-1, 0), (0, -1))
        for q, (dx, dy) in enumerate(shifts):
            nbr[:, q] = grid[x1 - lo1 + 1 + dx, x2 - lo2 + 1 + dy]
        self.nbr = nbr

        bond_u, bond_v, bond_dir = [], [], []
        for j in (0, 1):
            mask = nbr[:, j] >= 0
            u = np.nonzero(mask)[0].astype(np.int32)
            bond_u.append(u)
            bond_v.append(nbr[mask, j])
            bond_dir.append(np.full(len(u), j, dtype=np.int8))
        self.bond_u = np.concatenate(bond_u)
        self.bond_v = np.concatenate(bond_v)
        self.bond_dir = np.concatenate(bond_dir)
        self.n_bonds = len(self.bond_u)

        site_bonds = np.full((self.n_sites, 4), -1, dtype=np.int32)
        fill = np.zeros(self.n_sites, dtype=np.int64)
        for k in range(self.n_bonds):
            for s in (self.bond_u[k], self.bond_v[k]):
                site_bonds[s, fill[s]] = k
                fill[s] += 1
        self.site_bonds = site_bonds

    # -- lookups ------------------------------------------------------------

    def site_index(self, x1: int, x2: int) -> int:
        lo1, lo2 = self._grid_lo
        i1, i2 = x1 - lo1 + 1, x2 - lo2 + 1
        if i1 < 1 or i2 < 1 or i1 >= self._grid.shape[0] - 1 or i2 >= self._grid.shape[1] - 1:
            return -1
        return int(self._grid[i1, i2])

    def polar(self, i: int) -> PolarCoords:
        return PolarCoords(float(np.sqrt(self.r2[i])), float(self.sigma[i]), float(self.theta[i]))

    def __repr__(self):
        return f"LatticeBall(T={self.T:g}, r_max={self.r_max}, radius={self.radius}, sites={self.n_sites})"


def build_ball(T: float, r_max: float, max_sites: int = 2_000_000) -> LatticeBall:
    """Lattice ball of radius floor(T^r_max) around the origin."""
    if not T > 1.0:
        raise ValueError(f"scale T must exceed 1, got {T}")
    if not 0.5 < r_max < 1.0:
        raise ValueError(f"r_max must lie in (1/2, 1), got {r_max}")
    radius = int(np.floor(T ** r_max))
    est = int(np.pi * (radius + 1) ** 2) + 1
    if est > max_sites:
        raise SizingError(f"ball radius {radius} holds about {est} sites, over the budget of {max_sites}")
    n = radius
    g1, g2 = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    g1 = g1.ravel(); g2 = g2.ravel()
    keep = g1 * g1 + g2 * g2 <= radius * radius
    return LatticeBall(T, r_max, g1[keep], g2[keep], radius)


def build_block(shape: tuple, T: float, anchor: tuple = (0, 0)) -> LatticeBall:
    """Small rectangular site block (exact-enumeration checks on <= ~16 sites)."""
    nx, ny = shape
    a1, a2 = anchor
    g1, g2 = np.meshgrid(np.arange(a1, a1 + nx), np.arange(a2, a2 + ny), indexing="ij")
    ball = LatticeBall(T, 0.99, g1.ravel(), g2.ravel(), max(nx, ny))
    return ball


def sigma_T(ball: LatticeBall, site: int) -> float:
    """Radial exponent log|x|/log T of a non-origin site."""
    if site == ball.origin_index:
        raise GeometryError("sigma_T is undefined at the origin")
    return float(ball.sigma[site])


# ---------------------------------------------------------------------------
# occupation configurations

class Configuration:
    """Occupation field eta in {0,1}^sites with a cached particle count."""

    def __init__(self, eta: np.ndarray):
        self.eta = np.ascontiguousarray(eta, dtype=np.uint8)
        if self.eta.max(initial=0) > 1:
            raise ValueError("occupation bits must be 0 or 1")
        self.particle_count = int(self.eta.sum())

    def copy(self) -> "Configuration":
        return Configuration(self.eta.copy())

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.eta, other.eta)


def exchange(ball: LatticeBall, config: Configuration, i: int, j: int) -> Configuration:
    """Swap the occupations of two nearest-neighbor sites, in place."""
    dx = int(ball.x1[i]) - int(ball.x1[j])
    dy = int(ball.x2[i]) - int(ball.x2[j])
    if abs(dx) + abs(dy) != 1:
        raise GeometryError(f"sites {i} and {j} are not nearest neighbors")
    eta = config.eta
    eta[i], eta[j] = eta[j], eta[i]
    return config


# ---------------------------------------------------------------------------
# tilt profiles

LOGIT_EPS = 1e-4  # default clamp keeping logits finite


def _logit(p):
    with np.errstate(divide="ignore"):
        return np.log(p / (1.0 - p))


class TiltProfile:
    """Radial density profile gamma with its logit transform Gamma.

    gamma must be C^2 with gamma' compactly supported in (0, 1/2) and
    gamma(r) = alpha for r >= 1/2; smoothness of grid-supplied profiles is the
    caller's responsibility (spot-checked by finite differences in tests).
    Subclasses provide gamma/dgamma/d2gamma; instances must pickle (replica
    workers receive them).
    """

    alpha: float
    eps: float
    name: str

    def __init__(self, alpha: float, eps: float = LOGIT_EPS, name: str = "custom"):
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.name = name

    def gamma(self, r):
        raise NotImplementedError

    def dgamma(self, r):
        raise NotImplementedError

    def d2gamma(self, r):
        raise NotImplementedError

    def gamma_at(self, r):
        return np.clip(self.gamma(r), self.eps, 1.0 - self.eps)

    def Gamma_at(self, r):
        g = self.gamma_at(r)
        return 0.5 * (_logit(g) - _logit(self.alpha))

    def dGamma_at(self, r):
        g = self.gamma_at(r)
        return self.dgamma(r) / (2.0 * g * (1.0 - g))

    def d2Gamma_at(self, r):
        g = self.gamma_at(r)
        s = g * (1.0 - g)
        return self.d2gamma(r) / (2.0 * s) - self.dgamma(r) ** 2 * (1.0 - 2.0 * g) / (2.0 * s * s)

    def site_tables(self, ball: LatticeBall):
        """Per-site (gamma, Gamma) tables; the origin evaluates at sigma = 0."""
        g = self.gamma_at(ball.sigma)
        G = 0.5 * (_logit(g) - _logit(self.alpha))
        return g, G


class ConstantTilt(TiltProfile):
    def __init__(self, alpha: float):
        super().__init__(alpha, name=f"constant-{alpha:g}")

    def gamma(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.alpha)

    def dgamma(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    d2gamma = dgamma


class SmoothstepTilt(TiltProfile):
    """gamma = beta below r0, alpha above r1, quintic C^2 ramp in between."""

    def __init__(self, alpha: float, beta: float, r0: float, r1: float):
        if not (0.0 < r0 < r1 <= 0.5):
            raise ValueError("tilt ramp must satisfy 0 < r0 < r1 <= 1/2")
        super().__init__(alpha, name=f"smoothstep-{beta:g}-{r0:g}-{r1:g}")
        self.beta = float(beta)
        self.r0 = float(r0)
        self.r1 = float(r1)

    def gamma(self, r):
        t = (np.asarray(r, dtype=float) - self.r0) / (self.r1 - self.r0)
        return self.beta + (self.alpha - self.beta) * smoothstep(t)

    def dgamma(self, r):
        w = self.r1 - self.r0
        t = (np.asarray(r, dtype=float) - self.r0) / w
        return (self.alpha - self.beta) * smoothstep_d1(t) / w

    def d2gamma(self, r):
        w = self.r1 - self.r0
        t = (np.asarray(r, dtype=float) - self.r0) / w
        return (self.alpha - self.beta) * smoothstep_d2(t) / w ** 2


class GridTilt(TiltProfile):
    """Tilt from a radial grid with cubic interpolation, constant outside."""

    def __init__(self, alpha: float, r_points, gamma_values, eps: float = LOGIT_EPS):
        r_points = np.asarray(r_points, dtype=float)
        gamma_values = np.asarray(gamma_values, dtype=float)
        if len(r_points) < 4:
            raise ValueError("grid tilt needs at least 4 points")
        super().__init__(alpha, eps=eps, name="grid")
        self._lo, self._hi = float(r_points[0]), float(r_points[-1])
        self._glo, self._ghi = float(gamma_values[0]), float(gamma_values[-1])
        self._spline = CubicSpline(r_points, gamma_values, bc_type="clamped")
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)

    def gamma(self, r):
        r = np.asarray(r, dtype=float)
        inner = self._spline(np.clip(r, self._lo, self._hi))
        return np.where(r <= self._lo, self._glo, np.where(r >= self._hi, self._ghi, inner))

    def dgamma(self, r):
        r = np.asarray(r, dtype=float)
        return np.where((r > self._lo) & (r < self._hi), self._d1(np.clip(r, self._lo, self._hi)), 0.0)

    def d2gamma(self, r):
        r = np.asarray(r, dtype=float)
        return np.where((r > self._lo) & (r < self._hi), self._d2(np.clip(r, self._lo, self._hi)), 0.0)


def constant_tilt(alpha: float) -> TiltProfile:
    return ConstantTilt(alpha)


def smoothstep_tilt(alpha: float, beta: float, r0: float, r1: float) -> TiltProfile:
    return SmoothstepTilt(alpha, beta, r0, r1)


def grid_tilt(alpha: float, r_points, gamma_values, eps: float = LOGIT_EPS) -> TiltProfile:
    return GridTilt(alpha, r_points, gamma_values, eps)


def random_smooth_tilt(alpha: float, rng: np.random.Generator) -> TiltProfile:
    """Random smoothstep tilt, used by the detailed-balance sweeps."""
    beta = float(np.clip(alpha + rng.uniform(-0.35, 0.35), 0.05, 0.95))
    r0 = float(rng.uniform(0.04, 0.15))
    r1 = float(rng.uniform(r0 + 0.1, 0.48))
    return smoothstep_tilt(alpha, beta, r0, r1)


def sample_product_measure(ball: LatticeBall,
                           profile: Union[TiltProfile, float],
                           seed: int, replica: int = 0) -> Configuration:
    """Independent Bernoulli bits with P[eta(x)=1] = gamma(sigma_T(x)) or alpha."""
    from .rng import numpy_rng

    if isinstance(profile, TiltProfile):
        dens, _ = profile.site_tables(ball)
    else:
        a = float(profile)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {a}")
        dens = np.full(ball.n_sites, a)
    rng = numpy_rng(seed, replica)
    return Configuration((rng.random(ball.n_sites) < dens).astype(np.uint8))
