"""Figures: sCF channel slices and loss curves."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + ".partial" + path.suffix)
    fig.savefig(tmp, dpi=120, bbox_inches="tight")
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_slices(tensors: dict, channels: Sequence[int], path, cmap: str = "viridis") -> Path:
    """Grid of 2D slices ``F[:, :, c]``: one row per named tensor, one column per channel.

    ``tensors`` maps a row label to a (σ, σ, N) array; rows share a colour scale
    per column so degraded and restored views are comparable.
    """
    names = list(tensors)
    fig, axes = plt.subplots(len(names), len(channels), squeeze=False,
                             figsize=(2.4 * len(channels), 2.4 * len(names)))
    for j, c in enumerate(channels):
        vmax = max(float(np.max(tensors[n][:, :, c])) for n in names) or 1.0
        for i, n in enumerate(names):
            ax = axes[i, j]
            # first array axis is x, second is y; show y upwards
            ax.imshow(tensors[n][:, :, c].T, origin="lower", cmap=cmap, vmin=0.0, vmax=vmax)
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(f"channel {c}", fontsize=9)
            if j == 0:
                ax.set_ylabel(n, fontsize=9)
    return _save(fig, path)


def plot_loss(traces: dict, path, smooth: int = 50) -> Path:
    """Loss curves (log scale) with a moving-average overlay; ``traces`` maps label -> records."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, records in traces.items():
        it = np.array([r.iteration for r in records])
        loss = np.array([r.loss for r in records])
        line, = ax.plot(it, loss, alpha=0.25, lw=0.8)
        if len(loss) >= smooth > 1:
            avg = np.convolve(loss, np.ones(smooth) / smooth, mode="valid")
            ax.plot(it[smooth - 1:], avg, color=line.get_color(), lw=1.5, label=label)
        else:
            line.set_label(label)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("MSE loss")
    ax.legend(fontsize=8)
    return _save(fig, path)
