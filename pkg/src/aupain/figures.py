"""Figure rendering for the report-producing commands.

Every renderer writes a PNG next to the delimited output. PNG metadata is
pinned so repeated runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engagement import EngagementProfile
from .evaluation import AblationResult, ConfusionMatrix
from .regressor import TrainHistory

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def engagement_bar(profile: EngagementProfile, path: str | Path) -> Path:
    """Normalized engagement per AU, ordered from most to least engaged."""
    path = Path(path)
    labels = [f"AU{au}" for au in profile.ranking]
    values = [profile.normalized[au] for au in profile.ranking]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_ylabel("normalized engagement")
    ax.set_title(f"AU engagement ({profile.frame_count} frames)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def ablation_curve(result: AblationResult, path: str | Path) -> Path:
    """Mean best validation loss against the number of core AUs used."""
    path = Path(path)
    ks = sorted(result.losses)
    losses = [result.losses[k] for k in ks]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ks, losses, marker="o", color="#4878a8")
    ax.axvline(result.best_k, color="#b04848", linestyle="--", linewidth=1)
    ax.set_xlabel("core AUs used (by engagement rank)")
    ax.set_ylabel("mean best validation loss")
    ax.set_title(f"core-AU selection (best k = {result.best_k})")
    ax.set_xticks(ks)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def history_curves(history: TrainHistory, path: str | Path) -> Path:
    """Training and validation loss per epoch."""
    path = Path(path)
    epochs = np.arange(1, len(history.train_loss) + 1)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(epochs, history.train_loss, label="train", color="#4878a8")
    ax.plot(epochs, history.val_loss, label="validation", color="#b04848")
    ax.set_xlabel("epoch")
    ax.set_ylabel("smooth-L1 loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def confusion_heatmap(cm: ConfusionMatrix, path: str | Path, title: str = "") -> Path:
    """Row-normalized heatmap with raw counts annotated."""
    path = Path(path)
    counts = cm.counts.astype(float)
    row_sums = counts.sum(axis=1, keepdims=True)
    shares = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(shares, cmap="Blues", vmin=0.0, vmax=1.0)
    ticks = range(len(cm.class_names))
    ax.set_xticks(ticks, cm.class_names, rotation=30, ha="right")
    ax.set_yticks(ticks, cm.class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    for i in ticks:
        for j in ticks:
            color = "white" if shares[i, j] > 0.5 else "black"
            ax.text(j, i, str(int(cm.counts[i, j])), ha="center", va="center", color=color)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
