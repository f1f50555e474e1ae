"""Figure rendering for run artifacts.

Every run subcommand writes plot-ready CSVs; this module additionally
renders a few standard matplotlib figures (PNG) next to them.  All
figures use the Agg backend so headless runs never touch a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import GridSpec

_DPI = 130


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_time_series(rows, path, epsilon: float | None = None):
    """Entropy/Lyapunov, dissipation, and mass along one run."""
    ts = np.array([r.t for r in rows])
    ent = np.array([r.entropy for r in rows])
    diss = np.array([r.dissipation for r in rows])
    mass = np.array([r.mass_f for r in rows])

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    axes[0].plot(ts, ent, "o-", ms=3, label="entropy")
    if epsilon is not None:
        lya = ent + 0.5 * np.array([r.eps_u_sq for r in rows])
        axes[0].plot(ts, lya, "s--", ms=3, label="entropy + eps/2 |u|^2")
        axes[0].legend(fontsize=8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("E")
    axes[1].semilogy(ts, np.maximum(diss, 1e-300), "o-", ms=3)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("dissipation")
    axes[2].plot(ts, mass, "o-", ms=3)
    axes[2].set_xlabel("t")
    axes[2].set_ylabel("mass")
    axes[2].ticklabel_format(useOffset=False)
    _save(fig, path)


def plot_bounds(rows, path):
    """min f and max rho: the structural bounds along the run."""
    ts = np.array([r.t for r in rows])
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].plot(ts, [r.min_f for r in rows], "o-", ms=3)
    axes[0].axhline(0.0, color="k", lw=0.8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("min f")
    axes[1].plot(ts, [r.max_rho for r in rows], "o-", ms=3)
    axes[1].axhline(1.0, color="k", lw=0.8)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("max rho")
    _save(fig, path)


def plot_rho(grid: GridSpec, rho: np.ndarray, path, title="rho"):
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(rho.T, origin="lower", extent=(0, 2 * np.pi, 0, 2 * np.pi),
                   cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    _save(fig, path)


def plot_mode_rates(rates, path):
    """Real parts of the linearized rates against |n|."""
    mags = [np.sqrt(sum(c**2 for c in r.mode)) for r in rates]
    res = [r.rate.real for r in rates]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(mags, res, ".", ms=4)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("|n|")
    ax.set_ylabel("Re lambda")
    _save(fig, path)


def plot_fixed_point(report, path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    if report.increments:
        axes[0].semilogy(range(1, len(report.increments) + 1),
                         report.increments, "o-", ms=4)
    axes[0].set_xlabel("pass")
    axes[0].set_ylabel("increment (Xi norm)")
    if report.ratios:
        axes[1].plot(range(2, len(report.ratios) + 2), report.ratios, "s-",
                     ms=4)
    axes[1].axhline(1.0, color="k", lw=0.8)
    axes[1].set_xlabel("pass")
    axes[1].set_ylabel("contraction ratio")
    _save(fig, path)


def plot_sweep(epsilons, kmaxs, dist_to_finest, path):
    """Heatmap of terminal-state distance to the finest (eps, K) run."""
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    arr = np.asarray(dist_to_finest, dtype=float)
    im = ax.imshow(arr, origin="lower", cmap="magma", aspect="auto")
    ax.set_xticks(range(len(kmaxs)), [str(k) for k in kmaxs])
    ax.set_yticks(range(len(epsilons)), [str(e) for e in epsilons])
    ax.set_xlabel("K")
    ax.set_ylabel("epsilon")
    fig.colorbar(im, ax=ax)
    _save(fig, path)
