"""Matplotlib figure rendering for CLI reports.

Figures are written next to the delimited outputs (history CSV, metrics
JSON) so runs can be inspected without extra tooling.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .grammar import Configuration
from .training import EvalResult, TrainHistory


def plot_history(history: TrainHistory, path) -> None:
    """Loss and training accuracy per epoch, folding phase shaded."""
    epochs = [e.epoch for e in history.epochs]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax_loss.plot(epochs, [e.loss for e in history.epochs], marker="o")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean loss")
    ax_acc.plot(epochs, [e.accuracy for e in history.epochs],
                marker="o", color="tab:green")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("train accuracy")
    ax_acc.set_ylim(0, 1.02)
    for ax in (ax_loss, ax_acc):
        for e in history.epochs:
            if e.mode == "folding":
                ax.axvspan(e.epoch - 0.5, e.epoch + 0.5, color="0.9", zorder=0)
    fig.suptitle("training history (shaded = folding phase)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _draw_config(ax, config: Configuration, title: str) -> None:
    ax.set_xlim(0, config.grid_w)
    ax.set_ylim(config.grid_h, 0)
    ax.set_xticks(range(config.grid_w + 1))
    ax.set_yticks(range(config.grid_h + 1))
    ax.grid(True, lw=0.3)
    ax.set_aspect("equal")
    cmap = plt.get_cmap("tab20")
    for i, r in enumerate(sorted(config.rects)):
        ax.add_patch(Rectangle((r.x, r.y), r.w, r.h, lw=2,
                               edgecolor="black", facecolor=cmap(i % 20),
                               alpha=0.55))
    ax.set_title(title, fontsize=8)


def plot_configurations(configs: list[tuple[Configuration, str]], path,
                        cols: int = 4) -> None:
    """Grid of configuration tilings, one panel per (config, title)."""
    n = max(len(configs), 1)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.4 * rows),
                             squeeze=False)
    for ax in axes.flat:
        ax.axis("off")
    for ax, (config, title) in zip(axes.flat, configs):
        ax.axis("on")
        _draw_config(ax, config, title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_eval(result: EvalResult, path, max_panels: int = 12) -> None:
    """Recovered configurations for the first few evaluated samples."""
    panels = []
    for i, r in enumerate(result.results):
        if r.configuration is None:
            continue
        title = f"#{i} pred={r.predicted} true={r.label}"
        if r.match is not None:
            title += f" match={r.match:.2f}"
        panels.append((r.configuration, title))
        if len(panels) >= max_panels:
            break
    if panels:
        plot_configurations(panels, path)
