"""Report figures rendered to files next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (5.2, 3.4),
    "figure.dpi": 130,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def render_density(path, density, tilt=None, label="mollified density"):
    fig, ax = plt.subplots()
    ax.plot(density.grid, density.values, lw=1.5, label=label)
    if tilt is not None:
        rr = np.linspace(density.grid[0], density.grid[-1], 400)
        ax.plot(rr, tilt.gamma_at(rr), "k--", lw=1.0, label="tilt profile")
    ax.set_xlabel("radial exponent r")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    return _save(fig, path)


def render_instanton(path, result, exact=None):
    fig, ax = plt.subplots()
    ax.plot(result.density.grid, result.density.values, lw=1.5, label="solver")
    if exact is not None:
        ax.plot(result.density.grid, exact, "k--", lw=1.0, label="closed form")
    ax.set_xlabel("r")
    ax.set_ylabel("m(r)")
    ax.set_title(f"instanton value {result.value:.6f}")
    ax.legend(frameon=False)
    return _save(fig, path)


def render_girsanov(path, breakdowns):
    fig, ax = plt.subplots()
    vals = [d.scaled_total for d in breakdowns]
    ax.hist(vals, bins=max(6, len(vals) // 4), color="#4878b0", edgecolor="white")
    ax.set_xlabel("(log T / T) log dP_tilt/dP_ref")
    ax.set_ylabel("replicas")
    return _save(fig, path)


def render_rate_report(path, report):
    fig, ax = plt.subplots()
    sizes = sorted(int(k) for k in report.Q_basis)
    vals = [report.Q_basis[str(n)] for n in sizes]
    ax.plot(sizes, vals, "o-", label="basis supremum")
    if np.isfinite(report.Q_closed):
        ax.axhline(report.Q_closed, color="k", ls="--", lw=1.0, label="closed form")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("basis size")
    ax.set_ylabel("energy value")
    ax.legend(frameon=False)
    return _save(fig, path)
