"""Figures written next to CLI reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trainer import smoothed  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_map_report(per_scene: dict, overall: dict, path) -> None:
    """Grouped bars of mAP per scene for each k, with the overall value as a dashed line."""
    ks = sorted(overall)
    scenes = sorted(per_scene)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(scenes) + 2), 3.2))
    width = 0.8 / max(len(ks), 1)
    x = np.arange(len(scenes))
    for n, k in enumerate(ks):
        vals = [per_scene[s].get(k, np.nan) for s in scenes]
        bars = ax.bar(x + n * width, vals, width, label=f"mAP@{k}")
        ax.axhline(overall[k], ls="--", lw=0.8, color=bars.patches[0].get_facecolor() if bars.patches else "k")
    ax.set_xticks(x + width * (len(ks) - 1) / 2)
    ax.set_xticklabels(scenes, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("mAP")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_loss_curves(curves: dict, path, window: int = 50) -> None:
    """One smoothed loss curve per label, e.g. ``{"mtl": losses, "tl": losses}``."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label, losses in curves.items():
        y = smoothed(losses, window)
        x = np.arange(len(y)) + (len(losses) - len(y))
        ax.plot(x, y, lw=1.2, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel(f"loss (window {window})")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_map_curves(curves: dict, path, k: int = 10) -> None:
    """mAP@k against training step, one line per label; values are ``[(step, map), ...]``."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label, pts in curves.items():
        s, m = zip(*pts) if pts else ((), ())
        ax.plot(s, m, marker="o", ms=3, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel(f"mAP@{k}")
    ax.legend(fontsize=8)
    _save(fig, path)
