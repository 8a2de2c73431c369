"""Render tidy (series, k, value) rows to image files with the Agg backend."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def group(rows) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    acc = defaultdict(lambda: ([], []))
    for series, k, value in rows:
        acc[series][0].append(k)
        acc[series][1].append(value)
    return {s: (np.asarray(k), np.asarray(v, dtype=float)) for s, (k, v) in acc.items()}


def plot_series(rows, path, title="", xlabel="k", ylabel="", logy=False, series=None) -> Path:
    """Line plot of the selected series (all when ``series`` is None)."""
    path = Path(path)
    data = group(rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, (k, v) in data.items():
            if series is not None and name not in series:
                continue
            if logy:
                v = np.abs(v)
            ax.plot(k, v, lw=1.2, label=name)
        if logy:
            ax.set_yscale("log")
        ax.set(title=title, xlabel=xlabel, ylabel=ylabel)
        if ax.lines:
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def plot_pattern(mask, path, title="free entries of H") -> Path:
    path = Path(path)
    with plt.rc_context({**STYLE, "figure.figsize": (4.2, 4.2), "axes.grid": False}):
        fig, ax = plt.subplots()
        ax.spy(mask, markersize=2)
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path
