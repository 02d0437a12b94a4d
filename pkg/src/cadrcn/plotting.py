"""Report figures, written next to the JSON/TSV outputs of each command."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
    "svg.hashsalt": "cadrcn",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_training_curve(history: Sequence[Mapping], path: str | Path) -> Path:
    epochs = [h["epoch"] for h in history]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.plot(epochs, [h["loss"] for h in history], "o-", color="C0", ms=3, label="loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        ax.set_yscale("log")
        ax2 = ax.twinx()
        ax2.plot(epochs, [h["train_f1"] for h in history], "s--", color="C1", ms=3, label="train F1")
        dev = [(h["epoch"], h["dev_f1"]) for h in history if h.get("dev_f1") is not None]
        if dev:
            ax2.plot(*zip(*dev), "^--", color="C2", ms=3, label="dev F1")
        ax2.set_ylabel("micro F1")
        ax2.set_ylim(0, 1.02)
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
        return _save(fig, path)


def plot_class_scores(per_class: Mapping[str, Mapping], path: str | Path, title: str = "") -> Path:
    names = list(per_class)
    x = np.arange(len(names))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(names)), 3.2))
        for k, key in enumerate(("precision", "recall", "f1")):
            ax.bar(x + (k - 1) * 0.27, [100 * per_class[n][key] for n in names], width=0.27, label=key)
        ax.set_xticks(x, names, rotation=30, ha="right")
        ax.set_ylabel("%")
        ax.set_ylim(0, 105)
        ax.legend(ncol=3, loc="lower center")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_confusion(matrix: np.ndarray, labels: Sequence[str], path: str | Path, title: str = "") -> Path:
    matrix = np.asarray(matrix)
    with plt.rc_context(RC):
        size = 1.0 + 0.6 * len(labels)
        fig, ax = plt.subplots(figsize=(size + 1.0, size))
        im = ax.imshow(matrix, cmap="Blues")
        ax.set_xticks(range(len(labels)), labels, rotation=40, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("gold")
        hi = matrix.max() if matrix.size else 0
        for (i, j), v in np.ndenumerate(matrix):
            ax.text(j, i, str(v), ha="center", va="center", color="white" if v > hi / 2 else "black")
        fig.colorbar(im, ax=ax, shrink=0.8)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_counts(counts: Mapping[str, Mapping[str, int]], path: str | Path, title: str = "") -> Path:
    """Grouped bars, one group per outer key (e.g. train/test) and one bar per class."""
    groups = list(counts)
    classes = list(next(iter(counts.values()))) if counts else []
    x = np.arange(len(classes))
    width = 0.8 / max(len(groups), 1)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(classes)), 3.2))
        for k, g in enumerate(groups):
            ax.bar(x + (k - (len(groups) - 1) / 2) * width, [counts[g][c] for c in classes], width=width, label=g)
        ax.set_xticks(x, classes, rotation=30, ha="right")
        ax.set_ylabel("instances")
        if len(groups) > 1:
            ax.legend()
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_variants(scores: Mapping[str, float], path: str | Path, reference: str | None = None) -> Path:
    """Held-out F1 of model variants, with an optional reference line."""
    names = list(scores)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(names)), 3.0))
        ax.bar(range(len(names)), [100 * scores[n] for n in names], color="C0")
        if reference is not None:
            ax.axhline(100 * scores[reference], color="C3", lw=1, ls="--")
        ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
        lo = min(scores.values()) if scores else 0
        ax.set_ylim(max(0, 100 * lo - 5), 100.5)
        ax.set_ylabel("micro F1 (%)")
        return _save(fig, path)
