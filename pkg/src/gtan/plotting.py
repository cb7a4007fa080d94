"""Report figures rendered to image files with the Agg backend."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curve(records: Sequence[Mapping], path, selected: int | None = None) -> Path:
    """Training loss (left axis) and validation metrics (right axis) per epoch."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        epochs = [r["epoch"] for r in records]
        ax.plot(epochs, [r["train_loss"] for r in records], color="0.3", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean hinge loss")
        right = ax.twinx()
        right.plot(epochs, [r["val_p_at_1"] for r in records], label="val P@1")
        right.plot(epochs, [r["val_mrr"] for r in records], label="val MRR")
        right.set_ylim(0, 1)
        right.set_ylabel("validation metric")
        if selected:
            ax.axvline(selected, color="0.6", linestyle=":", linewidth=1)
        lines = ax.get_lines()[:1] + right.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="center right", frameon=False)
        return _save(fig, path)


def similarity_bars(report, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.0))
        names = ["Top-Top", "Top-Bottom", "Bottom-Bottom"]
        vals = [report.top_top, report.top_bottom, report.bottom_bottom]
        ax.bar(names, vals, color=["C0", "C7", "C3"])
        ax.set_ylabel("mean cosine similarity")
        ax.set_title(f"Top-Top vs Bottom-Bottom: {report.relative_gap:+.1%}")
        return _save(fig, path)


def interval_histogram_plot(hist: Mapping[str, int], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        total = sum(hist.values()) or 1
        ax.bar(list(hist), [100.0 * v / total for v in hist.values()], color="C0")
        ax.set_xlabel("minutes between question and answer")
        ax.set_ylabel("% of answers")
        return _save(fig, path)


def ablation_bars(rows: Sequence[Mapping], path, metric: str = "P@1") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        labels = [r["label"] for r in rows]
        vals = [r[metric] for r in rows]
        colors = ["C3" if lab == "GTAN" else "C0" for lab in labels]
        ax.bar(range(len(rows)), vals, color=colors)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=35, ha="right")
        ax.set_ylabel(metric)
        lo = min(vals)
        ax.set_ylim(max(0.0, lo - 0.1), min(1.0, max(vals) + 0.05))
        return _save(fig, path)


def layer_comparison(layers: Sequence[int], means: Sequence[float], path,
                     errors: Sequence[float] | None = None, metric: str = "P@1") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.0))
        ax.errorbar(layers, means, yerr=errors, marker="o", capsize=3)
        ax.set_xticks(list(layers))
        ax.set_xlabel("propagation layers")
        ax.set_ylabel(f"validation {metric}")
        return _save(fig, path)


def attention_heatmap(tokens: Sequence[str], weights: Sequence[float], path,
                      title: str = "") -> Path:
    """One row of token weights; darker cells carry more attention."""
    with plt.rc_context(STYLE):
        width = max(3.0, 0.45 * len(tokens) + 0.8)
        fig, ax = plt.subplots(figsize=(width, 1.4))
        ax.imshow(np.asarray(weights, float).reshape(1, -1), cmap="Blues", aspect="auto",
                  vmin=0.0, vmax=max(weights) if len(weights) else 1.0)
        ax.set_xticks(range(len(tokens)))
        ax.set_xticklabels(tokens, rotation=45, ha="right")
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        return _save(fig, path)
