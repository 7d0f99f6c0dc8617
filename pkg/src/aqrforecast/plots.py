"""Static SVG verification plots.

Emission is deterministic: the Agg backend, a fixed svg.hashsalt and a
suppressed Date field make repeated renders byte-identical, which the
rerun-reproducibility guarantee relies on.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "aqrforecast"

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["reliability_diagram", "sharpness_bars", "fan_chart"]

_SVG_META = {"Date": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def reliability_diagram(curves: dict[str, tuple], path) -> None:
    """Nominal level vs empirical coverage, one line per model, diagonal ref.

    curves maps model name -> (levels, coverages).
    """
    fig, ax = plt.subplots(figsize=(5.0, 4.5))
    ax.plot([0, 1], [0, 1], ls="--", c="0.5", lw=1, label="ideal")
    for name in sorted(curves):
        levels, cov = curves[name]
        ax.plot(levels, cov, marker="o", ms=3, lw=1.2, label=name)
    ax.set_xlabel("nominal level")
    ax.set_ylabel("empirical coverage")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.set_title("Reliability")
    fig.tight_layout()
    _save(fig, path)


def sharpness_bars(widths: dict[str, tuple], path) -> None:
    """Mean central-interval width per nominal coverage, grouped by model.

    widths maps model name -> (central_levels, mean_widths).
    """
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    names = sorted(widths)
    if not names:
        raise ValueError("nothing to plot")
    base_levels = np.asarray(widths[names[0]][0])
    n_groups = len(base_levels)
    bar_w = 0.8 / max(len(names), 1)
    x = np.arange(n_groups)
    for j, name in enumerate(names):
        levels, vals = widths[name]
        if len(levels) != n_groups:
            raise ValueError("models were scored on different central levels")
        ax.bar(x + j * bar_w, vals, width=bar_w, label=name)
    ax.set_xticks(x + 0.4 - bar_w / 2)
    ax.set_xticklabels([f"{b:.0%}" for b in base_levels], fontsize=8)
    ax.set_xlabel("nominal central coverage")
    ax.set_ylabel("mean interval width")
    ax.legend(fontsize=8)
    ax.set_title("Sharpness")
    fig.tight_layout()
    _save(fig, path)


def fan_chart(hours, targets, quantiles, levels, path, bands=(0.9, 0.5)) -> None:
    """Central prediction intervals over a window, with the realized series.

    quantiles is (n, m) over `levels`; each beta in `bands` is shaded between
    the (1-beta)/2 and (1+beta)/2 quantile columns.
    """
    hours = np.asarray(hours, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    q = np.asarray(quantiles, dtype=np.float64)
    grid = np.asarray(levels, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7.0, 3.5))
    for rank, beta in enumerate(sorted(bands, reverse=True)):
        lo = np.flatnonzero(np.isclose(grid, (1 - beta) / 2, rtol=0.0, atol=1e-9))
        hi = np.flatnonzero(np.isclose(grid, (1 + beta) / 2, rtol=0.0, atol=1e-9))
        if lo.size != 1 or hi.size != 1:
            raise ValueError(f"band beta={beta} has no matching quantile levels")
        ax.fill_between(
            hours,
            q[:, lo[0]],
            q[:, hi[0]],
            alpha=0.25 + 0.15 * rank,
            color="C0",
            lw=0,
            label=f"{beta:.0%} interval",
        )
    med = np.flatnonzero(np.isclose(grid, 0.5, rtol=0.0, atol=1e-9))
    if med.size == 1:
        ax.plot(hours, q[:, med[0]], c="C0", lw=1.0, label="median")
    ax.plot(hours, targets, c="k", lw=0.8, label="observed")
    ax.set_xlabel("hours")
    ax.set_ylabel("normalized power")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8, ncol=2)
    ax.set_title("Central prediction intervals")
    fig.tight_layout()
    _save(fig, path)
