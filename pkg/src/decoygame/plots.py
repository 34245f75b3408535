"""SVG figures: adversary decision boundaries and F-score curves across intervals."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import model  # noqa: E402
from .domain import ConfigError  # noqa: E402

log = logging.getLogger(__name__)

GRID = 200
FLAT_TOL = 1e-9


def boundary_grid(params, X, margin: float = 0.5, n: int = GRID):
    """Probability surface of the adversary on an ``n x n`` grid covering ``X``."""
    lo = X.min(axis=0) - margin
    hi = X.max(axis=0) + margin
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys)
    probs = model.forward_prob(params, np.column_stack([gx.ravel(), gy.ravel()])).reshape(n, n)
    return gx, gy, probs


def emit_boundary_plot(params, dataset, path, title: str | None = None) -> Path:
    """Scatter ``dataset`` by class and trace the ``a(x) = 0.5`` level set.

    Args:
        params: Adversary parameters with two input features.
        dataset: ``(X, y)`` pair, ``X`` of shape ``(n, 2)``.
        path: Output file; the suffix picks the format (SVG recommended).
        title: Optional axes title.

    Returns:
        The written path. A model whose surface is constant gets no contour
        and a logged warning.
    """
    X, y = dataset
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if params.dim != 2 or X.shape[1] != 2:
        raise ConfigError(f"boundary plots need d = 2, got d = {params.dim}")
    gx, gy, probs = boundary_grid(params, X)
    fig, ax = plt.subplots(figsize=(5, 5))
    flat = float(probs.max() - probs.min()) < FLAT_TOL
    if flat:
        log.warning("flat model: probability %.3f everywhere, no boundary drawn", float(probs.mean()))
    else:
        ax.contourf(gx, gy, probs, levels=[0.0, 0.5, 1.0], colors=["#dde8f5", "#f7dede"], alpha=0.6)
        if probs.min() < 0.5 < probs.max():
            ax.contour(gx, gy, probs, levels=[0.5], colors="k", linewidths=1.2)
    for cls, color, label in ((0, "tab:blue", "non-damaging"), (1, "tab:red", "damaging")):
        mask = y == cls
        ax.scatter(X[mask, 0], X[mask, 1], s=8, c=color, label=label)
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_curves(rows, metric: str, path, title: str = "") -> Path:
    """One line per challenger mode over intervals, with a shaded 95% CI when available."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    modes = sorted({r["challenger_mode"] for r in rows})
    for mode in modes:
        sel = sorted((r for r in rows if r["challenger_mode"] == mode), key=lambda r: r["interval"])
        t = np.array([r["interval"] for r in sel])
        mean = np.array([r[metric] for r in sel])
        ax.plot(t, mean, marker="o", ms=3, label=mode)
        if metric == "f_mean":
            ci = np.array([r["f_ci95"] for r in sel])
            ax.fill_between(t, mean - ci, mean + ci, alpha=0.2)
    ax.set_xlabel("interval")
    ax.set_ylabel(metric.replace("_mean", ""))
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(summary, out_dir) -> list[Path]:
    """F-score, precision and recall curves for every (scenario, adversary, k) cell."""
    out_dir = Path(out_dir)
    files = []
    keys = sorted({(r["scenario"], r["adversary_mode"], r["k"]) for r in summary})
    for scenario, adv_mode, k in keys:
        rows = [r for r in summary if (r["scenario"], r["adversary_mode"], r["k"]) == (scenario, adv_mode, k)]
        stem = f"{scenario}-{adv_mode}-k{k}"
        for metric in ("f_mean", "precision_mean", "recall_mean"):
            name = metric.replace("_mean", "")
            title = f"{adv_mode} adversary, k={k}"
            files.append(plot_curves(rows, metric, out_dir / f"{stem}-{name}.svg", title))
    return files
