"""Rate functionals: closed-form energies, variational basis suprema, and the
occupation-time instanton.

Quadrature conventions for grid densities: cell midpoints carry the mobility,
centered differences the derivative.  A cell whose density jump exceeds
JUMP_THRESHOLD is treated as containing a discontinuity: its mobility is taken
from the lower-mobility side (the grid cannot localize a jump below its
spacing, and smearing it would overweight the high-mobility crossing values),
and the linear term attributes the jump to the cell's right grid point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import eigh, solve_banded

SIGMA_TOL = 1e-12        # mobility below this counts as degenerate
SLOPE_TOL = 1e-8         # derivative above this on a degenerate cell -> +inf
JUMP_THRESHOLD = 0.1     # density jump per cell treated as a discontinuity
NULLSPACE_RTOL = 1e-12


def mobility(a):
    """sigma(a) = a(1-a), the exclusion mobility."""
    return np.asarray(a, dtype=float) * (1.0 - np.asarray(a, dtype=float))


# ---------------------------------------------------------------------------
# radial densities

class RadialDensity:
    """Grid density m(r) on increasing radii, optionally alpha-extended."""

    def __init__(self, grid, values, alpha: Optional[float] = None,
                 alpha_extended: bool = False):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be matching 1-d arrays")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid radii must be strictly increasing")
        self.alpha = alpha
        self.alpha_extended = bool(alpha_extended)
        if self.alpha_extended:
            if alpha is None:
                raise ValueError("alpha_extended requires alpha")
            tail = self.values[self.grid >= 0.5]
            if tail.size and np.max(np.abs(tail - alpha)) > 1e-12:
                raise ValueError("alpha-extension violated: tail values differ from alpha")

    def __len__(self):
        return len(self.grid)

    def interp(self, r):
        return np.interp(r, self.grid, self.values)

    def in_unit_interval(self, tol: float = 1e-9) -> bool:
        return bool(self.values.min() >= -tol and self.values.max() <= 1.0 + tol)

    def with_alpha_extension(self, alpha: float) -> "RadialDensity":
        vals = np.where(self.grid >= 0.5, alpha, self.values)
        return RadialDensity(self.grid, vals, alpha=alpha, alpha_extended=True)

    def to_csv(self, path):
        with open(path, "w") as handle:
            handle.write("r,m\n")
            for r, m in zip(self.grid, self.values):
                handle.write(f"{r:.17g},{m:.17g}\n")

    @classmethod
    def from_csv(cls, path, **kw) -> "RadialDensity":
        data = np.genfromtxt(path, delimiter=",", names=True)
        if data.dtype.names is None or "r" not in data.dtype.names or "m" not in data.dtype.names:
            raise ValueError(f"{path}: expected CSV with header columns r,m")
        return cls(np.atleast_1d(data["r"]), np.atleast_1d(data["m"]), **kw)


def constant_density(alpha: float, n: int = 2048, r_end: float = 1.0) -> RadialDensity:
    grid = np.linspace(0.0, r_end, n)
    return RadialDensity(grid, np.full(n, alpha), alpha=alpha, alpha_extended=True)


def sine_instanton_density(n: int = 2048, r_end: float = 0.6) -> RadialDensity:
    """m = (1+sin(pi r))/2 on (0,1/2), constant 1 after; J^Q value pi^3/8."""
    grid = np.linspace(0.0, r_end, n)
    vals = np.where(grid < 0.5, (1.0 + np.sin(np.pi * np.minimum(grid, 0.5))) / 2.0, 1.0)
    return RadialDensity(grid, vals)


def step_density(beta: float, alpha: float, n: int = 2048, r_end: float = 1.0) -> RadialDensity:
    """m = beta on [0,1/2), alpha on [1/2,..); the jump falls between grid points.

    An even point count makes 1/2 the midpoint of a cell, so the grid samples
    never sit on the discontinuity itself.
    """
    if n % 2:
        n += 1
    grid = np.linspace(0.0, r_end, n)
    vals = np.where(grid < 0.5, beta, alpha)
    return RadialDensity(grid, vals, alpha=alpha, alpha_extended=True)


# ---------------------------------------------------------------------------
# quadrature cells

def _cells(density: RadialDensity, alpha_in_sigma: bool = False):
    """Midpoints, widths, slopes, mobilities (jump-aware), and jump flags."""
    g, m = density.grid, density.values
    h = np.diff(g)
    mid = 0.5 * (g[1:] + g[:-1])
    dm = np.diff(m)
    slope = dm / h
    m_mid = 0.5 * (m[1:] + m[:-1])
    if alpha_in_sigma:
        if density.alpha is None:
            raise ValueError("variant needs the density's alpha")
        m_sig = np.where(mid < 0.5, m_mid, density.alpha)
        m_lo, m_hi = (np.where(g[:-1] < 0.5, m[:-1], density.alpha),
                      np.where(g[1:] < 0.5, m[1:], density.alpha))
    else:
        m_sig = m_mid
        m_lo, m_hi = m[:-1], m[1:]
    sig = mobility(m_sig)
    jump = np.abs(dm) > JUMP_THRESHOLD
    if jump.any():
        sig = np.where(jump, np.minimum(mobility(m_lo), mobility(m_hi)), sig)
    return mid, h, dm, slope, sig, jump


def energy_closed(density: RadialDensity, variant: str = "plain",
                  return_location: bool = False):
    """Closed-form energy integral of a grid density.

    variant: 'plain'  -> (1/4) int_0^inf  m'^2 / sigma(m)
             'alpha'  -> (1/8) int_0^inf  m'^2 / sigma(m_alpha)
             'half_interval' -> (pi/4) int_0^{1/2} m'^2 / sigma(m)
    Returns +inf when a cell has degenerate mobility under a nonzero slope.
    """
    if variant not in ("plain", "alpha", "half_interval"):
        raise ValueError(f"unknown variant {variant!r}")
    mid, h, dm, slope, sig, _ = _cells(density, alpha_in_sigma=(variant == "alpha"))
    if variant == "half_interval":
        keep = mid <= 0.5  # closed at 1/2 so a jump sitting on the cut is charged
        mid, h, dm, slope, sig = mid[keep], h[keep], dm[keep], slope[keep], sig[keep]
    moving = np.abs(slope) > SLOPE_TOL
    degenerate = moving & (sig < SIGMA_TOL)
    if degenerate.any():
        loc = float(mid[np.argmax(degenerate)])
        value = float("inf")
        return (value, loc) if return_location else value
    contrib = np.where(moving, slope ** 2 / np.maximum(sig, SIGMA_TOL), 0.0) * h
    const = {"plain": 0.25, "alpha": 0.125, "half_interval": np.pi / 4.0}[variant]
    value = const * float(contrib.sum())
    return (value, None) if return_location else value


# ---------------------------------------------------------------------------
# B-spline test bases

class TestBasis:
    """Cubic B-spline bumps with compact supports inside (lo, hi).

    Knots are graded toward lo with power `grade` (the variational optimizers
    of alpha-extended densities stay O(1) down to small radii, where compact
    supports force a costly drop to zero), and refine dyadically in n.
    """

    __test__ = False  # not a pytest case

    def __init__(self, lo: float, hi: float, n: int, grade: float = 2.0):
        if not 0.0 < lo < hi:
            raise ValueError("need 0 < lo < hi")
        if n < 1:
            raise ValueError("basis size must be positive")
        self.lo, self.hi, self.n, self.grade = float(lo), float(hi), int(n), float(grade)
        t = np.linspace(0.0, 1.0, n + 4)
        self.knots = lo + (hi - lo) * t ** grade
        self.functions = [BSpline.basis_element(self.knots[i:i + 5], extrapolate=False)
                          for i in range(n)]
        self.supports = [(float(self.knots[i]), float(self.knots[i + 4])) for i in range(n)]

    def __len__(self):
        return self.n

    def evaluate(self, x) -> np.ndarray:
        out = np.empty((self.n, len(x)))
        for i, f in enumerate(self.functions):
            out[i] = np.nan_to_num(f(x), nan=0.0)
        return out


def single_bump_basis(center: float, width: float) -> TestBasis:
    """One cubic B-spline bump supported on [center-width, center+width]."""
    basis = TestBasis.__new__(TestBasis)
    basis.lo, basis.hi, basis.n, basis.grade = center - width, center + width, 1, 1.0
    basis.knots = np.linspace(center - width, center + width, 5)
    basis.functions = [BSpline.basis_element(basis.knots, extrapolate=False)]
    basis.supports = [(basis.lo, basis.hi)]
    return basis


_VARIANTS = {
    # name: (quadratic coefficient, outer constant, sigma uses alpha-extension,
    #        supports confined to (0, 1/2))
    "Q": (1.0, 1.0, False, False),
    "Q_alpha": (2.0, 1.0, True, False),
    "hatI": (1.0, 1.0, False, True),
    "J_Q": (1.0, np.pi, False, False),
}


def energy_basis(density: RadialDensity, basis: TestBasis, variant: str = "Q") -> float:
    """Exact maximum of c -> b.c - c.A c over the basis span.

    b_k = -int G_k' m = int G_k dm and A_kl = coeff * int sigma(m) G_k G_l with
    the variant's mobility argument; the result is b.A^{-1}b/4 scaled by the
    variant's outer constant.  Singular directions of A are dropped when b has
    no component there, else the supremum is +inf.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    coeff, outer, alpha_sigma, half = _VARIANTS[variant]
    if half:
        for lo_k, hi_k in basis.supports:
            if not (0.0 < lo_k and hi_k < 0.5):
                raise ValueError("hatI basis supports must stay inside (0, 1/2)")
    mid, h, dm, slope, sig, jump = _cells(density, alpha_in_sigma=alpha_sigma)
    G = basis.evaluate(mid)
    b = G @ dm
    if jump.any():
        # attribute each jump to the right grid point of its cell
        idx = np.nonzero(jump)[0]
        right = density.grid[idx + 1]
        for i, f in enumerate(basis.functions):
            at_right = np.nan_to_num(f(right), nan=0.0)
            b[i] += float(np.sum((at_right - G[i, idx]) * dm[idx]))
    A = coeff * np.einsum("iq,jq,q->ij", G, G, sig * h)
    lam, vec = eigh(A)
    bt = vec.T @ b
    lam_max = max(float(lam.max(initial=0.0)), 0.0)
    null = lam <= lam_max * NULLSPACE_RTOL
    if null.any() and np.max(np.abs(bt[null]), initial=0.0) > 1e-8 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return float("inf")
    keep = ~null
    value = 0.25 * float(np.sum(bt[keep] ** 2 / lam[keep]))
    return outer * value


def rate_I_Q_alpha(density: RadialDensity, alpha: Optional[float] = None) -> float:
    """pi * Q(m) on the alpha-extended unit-interval class, +inf outside it."""
    alpha = density.alpha if alpha is None else alpha
    if alpha is None:
        raise ValueError("reference density alpha required")
    if not density.in_unit_interval():
        return float("inf")
    tail = density.values[density.grid >= 0.5]
    if tail.size == 0 or np.max(np.abs(tail - alpha)) > 1e-9:
        return float("inf")
    return np.pi * energy_closed(density, "plain")


def J_gamma_linearized(density: RadialDensity, tilt) -> float:
    """J_gamma(m dr) = -pi int Gamma'' m - pi int sigma(m) Gamma'^2."""
    mid, h, dm, slope, sig, _ = _cells(density)
    m_mid = 0.5 * (density.values[1:] + density.values[:-1])
    g2 = tilt.d2Gamma_at(mid)
    g1 = tilt.dGamma_at(mid)
    term1 = -np.pi * float(np.sum(g2 * m_mid * h))
    term2 = -np.pi * float(np.sum(mobility(m_mid) * g1 ** 2 * h))
    return term1 + term2


def upsilon_closed(alpha: float, beta: float) -> float:
    """Occupation-time rate (pi/2) [arcsin(2 beta - 1) - arcsin(2 alpha - 1)]^2."""
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("densities must lie in [0, 1]")
    return float(np.pi / 2.0 * (np.arcsin(2.0 * beta - 1.0) - np.arcsin(2.0 * alpha - 1.0)) ** 2)


# ---------------------------------------------------------------------------
# instanton solver

@dataclass
class InstantonResult:
    density: RadialDensity
    value: float
    mode: str
    iterations: int = 0
    grad_norm: float = 0.0


class ConvergenceError(RuntimeError):
    pass


def _solve_substitution(alpha: float, beta: float, n: int) -> InstantonResult:
    # u = arcsin(2m-1) turns the energy into (pi/4) int u'^2 with fixed ends;
    # solve the discrete Laplace problem for the interior values
    u0 = float(np.arcsin(2.0 * beta - 1.0))
    u1 = float(np.arcsin(2.0 * alpha - 1.0))
    grid = np.linspace(0.0, 0.5, n + 1)
    if u0 == u1:
        dens = RadialDensity(grid, np.full(n + 1, 0.5 * (1.0 + np.sin(u1))), alpha=alpha)
        return InstantonResult(dens, 0.0, "substitution")
    if n >= 2:
        interior = n - 1
        ab = np.zeros((3, interior))
        ab[0, 1:] = -1.0
        ab[1, :] = 2.0
        ab[2, :-1] = -1.0
        rhs = np.zeros(interior)
        rhs[0] = u0
        rhs[-1] += u1
        u_in = solve_banded((1, 1), ab, rhs)
        u = np.concatenate(([u0], u_in, [u1]))
    else:
        u = np.array([u0, u1])
    m = 0.5 * (1.0 + np.sin(u))
    h = np.diff(grid)
    value = float(np.pi / 4.0 * np.sum((np.diff(u) / h) ** 2 * h))
    dens = RadialDensity(grid, m, alpha=alpha)
    return InstantonResult(dens, value, "substitution")


def _direct_energy_grad(m, h):
    dm = np.diff(m)
    m_mid = 0.5 * (m[1:] + m[:-1])
    sig = np.maximum(mobility(m_mid), 1e-14)
    e_cells = dm ** 2 / (h * sig)
    energy = np.pi / 4.0 * float(e_cells.sum())
    # d/dm_k of sum_c dm_c^2/(h sig_c): endpoint and mobility contributions
    dsig = (1.0 - 2.0 * m_mid) * 0.5
    gcell_lo = -2.0 * dm / (h * sig) - dm ** 2 * dsig / (h * sig ** 2)
    gcell_hi = 2.0 * dm / (h * sig) - dm ** 2 * dsig / (h * sig ** 2)
    grad = np.zeros_like(m)
    grad[:-1] += gcell_lo
    grad[1:] += gcell_hi
    return energy, np.pi / 4.0 * grad


def _solve_direct(alpha: float, beta: float, n: int, max_iter: int = 20000,
                  tol: float = 1e-8) -> InstantonResult:
    """Projected gradient descent with Barzilai-Borwein steps.

    The discrete objective is jointly convex (quadratic-over-concave-mobility
    cells), so the non-monotone BB iteration converges; clamping keeps the
    iterates inside (0, 1).
    """
    clamp_lo, clamp_hi = 1e-6, 1.0 - 1e-6
    if not (clamp_lo < alpha < clamp_hi and clamp_lo < beta < clamp_hi):
        raise ValueError("direct mode needs endpoint densities inside (0, 1)")
    grid = np.linspace(0.0, 0.5, n + 1)
    h = np.diff(grid)
    m = beta + (alpha - beta) * grid / 0.5
    energy, grad = _direct_energy_grad(m, h)
    grad[0] = grad[-1] = 0.0
    step = float(h.min())
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    while it < max_iter and gnorm >= tol:
        it += 1
        trial = np.clip(m - step * grad, clamp_lo, clamp_hi)
        trial[0], trial[-1] = m[0], m[-1]
        e_new, g_new = _direct_energy_grad(trial, h)
        g_new[0] = g_new[-1] = 0.0
        if not np.isfinite(e_new) or e_new > energy + 1e-2 * abs(energy):
            step *= 0.5  # safeguard against non-monotone overshoot
            if step < 1e-18:
                raise ConvergenceError(f"line search stalled; gradient norm {gnorm:.3e}")
            continue
        dm = trial - m
        dg = g_new - grad
        denom = float(dg @ dg)
        step = float(abs(dm @ dg) / denom) if denom > 0 else step * 1.5
        if not np.isfinite(step) or step <= 0.0:
            step = float(h.min())
        m, energy, grad = trial, e_new, g_new
        gnorm = float(np.max(np.abs(grad)))
    if gnorm >= max(tol, 1e-5):
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations; gradient norm {gnorm:.3e}")
    dens = RadialDensity(grid, m, alpha=alpha)
    return InstantonResult(dens, float(energy), "direct", iterations=it, grad_norm=gnorm)


def solve_instanton(alpha: float, beta: float, n: int = 1024,
                    mode: str = "substitution") -> InstantonResult:
    """Minimize (pi/4) int_0^{1/2} m'^2/sigma(m) with m(0)=beta, m(1/2)=alpha."""
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("endpoint densities must lie in [0, 1]")
    if mode == "substitution":
        return _solve_substitution(alpha, beta, n)
    if mode == "direct":
        return _solve_direct(alpha, beta, n)
    raise ValueError(f"unknown mode {mode!r}")


def instanton_profile_exact(alpha: float, beta: float, r):
    """Analytic minimizer m*(r) = (1 + sin(u0 + 2(u1-u0) r))/2 on [0, 1/2]."""
    u0 = np.arcsin(2.0 * beta - 1.0)
    u1 = np.arcsin(2.0 * alpha - 1.0)
    return 0.5 * (1.0 + np.sin(u0 + 2.0 * (u1 - u0) * np.asarray(r, dtype=float)))


# ---------------------------------------------------------------------------
# aggregate report

@dataclass
class RateReport:
    Q_closed: float
    Q_basis: dict
    Q_alpha_closed: float
    I_Q_alpha: float
    hat_I_alpha: float
    J_gamma: float
    J_Q_closed: float
    J_Q_basis: float
    Upsilon_closed: Optional[float]
    Upsilon_numeric: Optional[float]
    basis_size: int
    grid_size: int
    preset: str = ""

    def to_json(self, **extra) -> str:
        payload = {"schema": "polarssep-rate-report-1", **asdict(self), **extra}
        return json.dumps(_finite_or_str(payload), indent=2, sort_keys=True)


def _finite_or_str(obj):
    """Infinite sentinels serialize as the string 'inf' (portable JSON)."""
    if isinstance(obj, dict):
        return {k: _finite_or_str(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_str(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def default_basis(n: int = 64) -> TestBasis:
    return TestBasis(0.001, 0.56, n, grade=2.0)


def hatI_basis(n: int = 64, margin: float = 1e-3) -> TestBasis:
    return TestBasis(margin, 0.5 - margin, n, grade=2.0)


def build_rate_report(density: RadialDensity, alpha: float, basis_size: int = 64,
                      tilt=None, alpha_beta=None, preset: str = "") -> RateReport:
    """Evaluate every rate functional of a density with one basis family."""
    from .lattice import grid_tilt

    ext = density if density.alpha_extended else RadialDensity(
        density.grid, density.values, alpha=alpha)
    sizes = [n for n in (8, 16, 32, 64, 128) if n <= basis_size]
    q_basis = {n: energy_basis(ext, default_basis(n), "Q") for n in sizes}
    if tilt is None:
        # logit tilt from the density itself (clamped); gamma = m makes
        # J_gamma the variational value at its own optimum
        gpts = np.linspace(0.0, max(0.55, float(density.grid[-1])), 257)
        tilt = grid_tilt(alpha, gpts, np.clip(np.interp(gpts, density.grid, density.values),
                                              1e-4, 1.0 - 1e-4))
    ups_closed = ups_num = None
    if alpha_beta is not None:
        a, b = alpha_beta
        ups_closed = upsilon_closed(a, b)
        ups_num = solve_instanton(a, b, 1024).value
    return RateReport(
        Q_closed=energy_closed(ext, "plain"),
        Q_basis={str(k): v for k, v in q_basis.items()},
        Q_alpha_closed=energy_closed(ext, "alpha"),
        I_Q_alpha=rate_I_Q_alpha(ext, alpha),
        hat_I_alpha=energy_basis(ext, hatI_basis(basis_size), "hatI"),
        J_gamma=J_gamma_linearized(ext, tilt),
        J_Q_closed=energy_closed(ext, "half_interval"),
        J_Q_basis=energy_basis(ext, default_basis(basis_size), "J_Q"),
        Upsilon_closed=ups_closed,
        Upsilon_numeric=ups_num,
        basis_size=basis_size,
        grid_size=len(density),
        preset=preset,
    )
