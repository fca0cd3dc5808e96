"""Figure rendering for the report paths; files only, no interactive backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import ProfileFit
from .process import Trace

_DPI = 150


def _trim(ax):
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.xaxis.set_ticks_position("bottom")
    ax.yaxis.set_ticks_position("left")


def variance_decay_figure(trace: Trace, path) -> None:
    """Per-vertex variances and the consensus gap against iteration, log scale."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ts = np.arange(trace.variances.shape[0])
    for v in range(min(trace.n, 16)):
        ax.plot(ts, trace.variances[:, v], lw=0.9, alpha=0.7)
    gap = np.maximum(trace.consensus_gaps, 1e-300)
    ax.plot(ts, gap, "k--", lw=1.4, label="consensus gap")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("variance")
    ax.set_title(f"{trace.kind} dynamics, n={trace.n}")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, which="both", ls=":", lw=0.4)
    _trim(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def weight_profile_figure(weights, path, fit: ProfileFit | None = None) -> None:
    """Limit-weight profile with the optional fitted bell curve overlaid."""
    weights = np.asarray(weights, dtype=np.float64)
    n2 = len(weights)
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.plot(np.arange(n2), weights, "o", ms=5, label="limit weights")
    if fit is not None:
        ks = np.linspace(-0.5, n2 - 0.5, 400)
        curve = fit.amplitude * np.exp(-((ks - n2 / 2 + 0.5) ** 2) / fit.nu)
        ax.plot(ks, curve, "-", lw=1.2, label=f"bell fit (nu={fit.nu:.3g})")
    ax.set_xlabel("vertex")
    ax.set_ylabel("weight")
    ax.legend(fontsize=8)
    ax.grid(True, ls=":", lw=0.4)
    _trim(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def comparison_figure(rows: list[dict], path) -> None:
    """Bar chart of limit variances per dynamics, annotated with rates."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    names = [r["dynamics"] for r in rows]
    variances = [r["limit_variance"] for r in rows]
    bars = ax.bar(names, variances, color=["#4477aa", "#ee6677", "#228833"][: len(rows)])
    for bar, r in zip(bars, rows):
        rate = r.get("rate_estimate")
        label = f"rate {rate:.3g}" if isinstance(rate, float) else ""
        ax.annotate(
            label,
            xy=(bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_ylabel("limit variance")
    ax.grid(True, axis="y", ls=":", lw=0.4)
    _trim(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
