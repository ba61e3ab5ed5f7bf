"""Matplotlib figure rendering for the CLI report path.

Each curve-producing subcommand saves one of these figures next to its
delimited output. The CSVs stay the canonical, reproducible artifacts;
figures are a convenience rendering of the same grid.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ._transport import QQTransport
from .empirical import CrossingPoint, PiecewiseQFit
from .trend import TrendMap

_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def crossing_figure(s1, s2, crossing: CrossingPoint, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for cs, label, color in ((s1, f"period {s1.period}", "C0"), (s2, f"period {s2.period}", "C1")):
        xs = np.sort(cs.treatments)
        ax.step(xs, np.arange(1, len(xs) + 1) / len(xs), where="post", label=label, color=color)
    ax.axvline(crossing.location, color="k", ls="--", lw=1,
               label=f"crossing = {crossing.location:.3g}")
    lo, hi = crossing.search_interval
    ax.axvspan(lo, hi, color="0.9", zorder=0)
    ax.set_xlabel("treatment")
    ax.set_ylabel("empirical CDF")
    ax.legend()
    _save(fig, path)


def trend_figure(trend: TrendMap, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trend.grid, trend.g_values, color="C0", label=f"g for period {trend.period}")
    ax.plot(trend.grid, trend.grid, color="0.6", ls=":", label="identity")
    ax.set_xlabel(f"outcome, period-{trend.reference_period} scale")
    ax.set_ylabel(f"outcome, period-{trend.period} scale")
    ax.legend()
    _save(fig, path)


def bounds_figure(xs, lowers, uppers, path) -> None:
    xs = np.asarray(xs, dtype=float)
    lowers = np.asarray(lowers, dtype=float)
    uppers = np.asarray(uppers, dtype=float)
    finite = np.isfinite(lowers) & np.isfinite(uppers)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(xs[finite], lowers[finite], uppers[finite], alpha=0.3, color="C0",
                    label="bounds")
    ax.plot(xs[finite], lowers[finite], color="C0", lw=1)
    ax.plot(xs[finite], uppers[finite], color="C0", lw=1)
    ax.set_xlabel("treatment x")
    ax.set_ylabel("marginal-effect bounds")
    ax.legend()
    _save(fig, path)


def effect_curve_figure(estimates, path, ylabel: str = "effect") -> None:
    xs = np.array([e.eval_x for e in estimates])
    vals = np.array([e.value for e in estimates])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, vals, color="C0", marker="o", ms=3, lw=1, label="estimate")
    if all(e.ci is not None for e in estimates):
        los = np.array([e.ci[0] for e in estimates])
        his = np.array([e.ci[1] for e in estimates])
        ax.fill_between(xs, los, his, alpha=0.25, color="C0", label="bootstrap CI")
    ax.axhline(0.0, color="0.6", ls=":", lw=1)
    ax.set_xlabel("treatment x")
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)


def piecewise_q_figure(fit: PiecewiseQFit, s1, s2, path) -> None:
    k0, k3 = fit.knots[0], fit.knots[-1]
    pad = 0.15 * (k3 - k0)
    grid = np.linspace(k0 - pad, k3 + pad, 400)
    transport = QQTransport.from_samples(s1.treatments, s2.treatments)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, transport(grid) - grid, color="0.5", lw=1, label="empirical")
    ax.plot(grid, fit(grid) - grid, color="C0", lw=1.5, label="piecewise fit")
    for k in fit.knots:
        ax.axvline(k, color="0.85", lw=0.8, zorder=0)
    ax.axhline(0.0, color="0.6", ls=":", lw=1)
    ax.set_xlabel("treatment x")
    ax.set_ylabel("inverse rank map minus identity")
    ax.legend()
    _save(fig, path)
