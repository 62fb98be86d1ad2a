"""Report figures: overlay, scatter, and violin plots rendered to SVG.

All renderers take data plus an output path and return the path; nothing
here touches global state beyond forcing the Agg backend so the CLI works
headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "hrvbold",   # deterministic SVG ids across reruns
}


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def overlay_plot(measured: np.ndarray, predicted: np.ndarray, tr_seconds: float,
                 path: str | Path, title: str = "",
                 annotations: Mapping[str, float] | None = None) -> Path:
    """Measured vs reconstructed HRV waveforms for one scan."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(9, 3.2))
        t = np.arange(len(measured)) * tr_seconds
        ax.plot(t, measured, color="0.25", lw=1.2, label="measured")
        mask = np.isfinite(predicted)
        ax.plot(t[mask], predicted[mask], color="tab:red", lw=1.2,
                label="reconstructed")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("HRV (s)")
        if title:
            ax.set_title(title, fontsize=10)
        if annotations:
            text = "  ".join(f"{k}={v:.4g}" for k, v in annotations.items()
                             if v is not None)
            ax.text(0.01, 0.97, text, transform=ax.transAxes, fontsize=8,
                    va="top", bbox=dict(boxstyle="round", fc="white", alpha=0.7))
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        return _finish(fig, path)


def scatter_plot(x: Sequence[float], y: Sequence[float], path: str | Path,
                 xlabel: str = "HRV std (s)", ylabel: str = "Pearson r",
                 slope: float | None = None, intercept: float | None = None,
                 title: str = "") -> Path:
    """Per-scan accuracy against HRV variability, with the fitted trend."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.8, 4.0))
        ax.scatter(x, y, s=22, color="tab:blue", alpha=0.8, edgecolor="none")
        if slope is not None and intercept is not None and len(x):
            xs = np.linspace(x.min(), x.max(), 50)
            ax.plot(xs, slope * xs + intercept, color="tab:red", lw=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title, fontsize=10)
        fig.tight_layout()
        return _finish(fig, path)


def violin_plot(values_by_config: Mapping[str, Sequence[float]], path: str | Path,
                ylabel: str, title: str = "") -> Path:
    """Per-configuration distribution: white circle marks the median, black
    line marks the mean."""
    labels = list(values_by_config)
    data = [np.asarray(values_by_config[k], dtype=np.float64) for k in labels]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(1.6 * max(4, len(labels)), 4.0))
        positions = np.arange(1, len(labels) + 1)
        parts = ax.violinplot(data, positions=positions, showextrema=False)
        for body in parts["bodies"]:
            body.set_facecolor("tab:blue")
            body.set_alpha(0.5)
        for pos, vals in zip(positions, data):
            if len(vals) == 0:
                continue
            ax.hlines(np.mean(vals), pos - 0.18, pos + 0.18, color="black",
                      lw=1.6, zorder=3)
            ax.scatter([pos], [np.median(vals)], s=30, color="white",
                       edgecolor="black", zorder=4)
        ax.set_xticks(positions)
        ax.set_xticklabels(labels, rotation=15, ha="right", fontsize=8)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title, fontsize=10)
        fig.tight_layout()
        return _finish(fig, path)
