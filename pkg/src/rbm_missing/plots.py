"""Figures written straight to files (no display backend needed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["plot_loglik", "plot_variances"]


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_loglik(records, path, title: str | None = None) -> Path:
    """Log-likelihood against epoch, one line per split.

    ``records`` are metric dicts as written to metrics.csv; rows with a NaN
    log-likelihood are skipped.
    """
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    splits = sorted({r["split"] for r in records})
    for split in splits:
        pts = [(r["epoch"], r["loglik"]) for r in records if r["split"] == split and np.isfinite(r["loglik"])]
        if pts:
            ep, ll = zip(*pts)
            ax.plot(ep, ll, marker="o", ms=3, label=split)
    ax.set_xlabel("epoch")
    ax.set_ylabel("log-likelihood per datum")
    if title:
        ax.set_title(title)
    if ax.lines:
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_variances(rows, path) -> Path:
    """Scatter of spatial vs plain estimator variance, one colour per moment kind."""
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    hi = 0.0
    for kind, colour in (("v", "C0"), ("h", "C1"), ("vh", "C2")):
        sel = [r for r in rows if r.moment == kind]
        if not sel:
            continue
        x = np.array([r.var_mci for r in sel])
        y = np.array([r.var_smci for r in sel])
        hi = max(hi, x.max(), y.max())
        ax.scatter(x, y, s=12, color=colour, label=kind)
    ax.plot([0, hi], [0, hi], color="0.5", lw=1, ls="--")
    ax.set_xlabel("variance, plain average")
    ax.set_ylabel("variance, spatial estimator")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
