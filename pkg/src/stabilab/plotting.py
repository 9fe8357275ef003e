"""Static SVG figures for CLI reports (decorative; numbers live in the CSVs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "stabilab",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.4),
}


def _save(fig, path: str | Path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_decay(times, norms, bounds, path, free_norms=None, period=None):
    """Semilog trajectory norm with its exponential certificate."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.semilogy(times, norms, "o-", ms=2.5, lw=1, label="controlled")
        ax.semilogy(times, bounds, "--", lw=1, label="certificate")
        if free_norms is not None:
            ax.semilogy(times, free_norms, ":", lw=1, label="uncontrolled")
        if period:
            for t in np.arange(period, times[-1], period):
                ax.axvline(t, color="0.85", lw=0.5, zorder=0)
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\|x(t)\|$")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_uncertainty(lambdas, c1, fit_bound, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.semilogy(lambdas, c1, "o", ms=3, label=r"$\hat c_1(\lambda)$")
        ax.semilogy(lambdas, fit_bound, "-", lw=1, label=r"$d_0 e^{d_1\lambda}$")
        ax.set_xlabel(r"$\lambda$")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_dissipation(curves, path):
    """``curves``: iterable of ``(lam, t, measured, bound)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for lam, t, measured, bound in curves:
            (line,) = ax.semilogy(t, measured, "o", ms=2.5, label=rf"$\lambda={lam:g}$")
            ax.semilogy(t, bound, "-", lw=0.8, color=line.get_color())
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\|(I-P_\lambda)S_t\|$")
        ax.legend(frameon=False)
        _save(fig, path)
