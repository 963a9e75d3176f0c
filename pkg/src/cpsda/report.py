"""Run artifacts: delimited summaries and rendered figures.

Figures are written straight to files (headless backend), alongside the
CSV outputs, so a training or evaluation run leaves a self-contained
report directory.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cluster import Centroids
from .evaluate import ConfusionMatrix, EvalReport


def save_history_csv(history: dict[str, list[float]], path: str | Path) -> None:
    path = Path(path)
    terms = list(history.keys())
    epochs = len(history[terms[0]]) if terms else 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", *terms])
        for e in range(epochs):
            writer.writerow([e, *(repr(history[t][e]) for t in terms)])


_METRIC_FIELDS = ("domain", "sample_count", "accuracy", "precision", "recall",
                  "f1", "anomaly_rate")


def save_metrics_csv(reports: list[EvalReport], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_METRIC_FIELDS)
        for r in reports:
            row = []
            for name in _METRIC_FIELDS:
                value = getattr(r, name)
                row.append("" if value is None else value)
            writer.writerow(row)


def save_loss_figure(history: dict[str, list[float]], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for term, values in history.items():
        if values:
            ax.plot(range(len(values)), values, label=term)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training loss terms")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _pca_2d(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project to the top two principal axes; returns (projected, mean, basis)."""
    mean = points.mean(axis=0)
    centered = points - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:2].T
    return centered @ basis, mean, basis


def save_latent_figure(latents_by_domain: dict[str, np.ndarray],
                       predictions_by_domain: dict[str, np.ndarray],
                       centroids: Centroids | None, path: str | Path,
                       max_points_per_domain: int = 2000) -> None:
    """2-D principal-axis scatter of latents, colored by decision, with the
    centroids overlaid in the same projection."""
    pooled = np.concatenate(list(latents_by_domain.values()), axis=0)
    _, mean, basis = _pca_2d(pooled)
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    markers = {"source": "o", "target": "^"}
    for domain, latents in latents_by_domain.items():
        preds = predictions_by_domain[domain]
        keep = np.arange(len(latents))
        if len(keep) > max_points_per_domain:
            keep = np.linspace(0, len(latents) - 1, max_points_per_domain).astype(int)
        proj = (latents[keep] - mean) @ basis
        colors = np.where(preds[keep] == 1, "tab:red", "tab:blue")
        ax.scatter(proj[:, 0], proj[:, 1], c=colors, s=6, alpha=0.35,
                   marker=markers.get(domain, "o"), label=domain, linewidths=0)
    if centroids is not None and centroids.class_of is not None:
        mu_proj = (centroids.mu - mean) @ basis
        for row, cls in zip(mu_proj, centroids.class_of):
            ax.scatter([row[0]], [row[1]], c="black", s=120,
                       marker="X" if cls == 1 else "P")
            ax.annotate("anomaly" if cls == 1 else "benign", row,
                        textcoords="offset points", xytext=(6, 6), fontsize=9)
    ax.set_xlabel("principal axis 1")
    ax.set_ylabel("principal axis 2")
    ax.set_title("latent space decisions")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_figure(cm: ConfusionMatrix, domain: str, path: str | Path) -> None:
    grid = np.array([[cm.tn, cm.fp], [cm.fn, cm.tp]], dtype=float)
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(grid, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, f"{int(grid[i, j])}", ha="center", va="center",
                    color="black")
    ax.set_xticks([0, 1], ["pred benign", "pred anomaly"])
    ax.set_yticks([0, 1], ["true benign", "true anomaly"])
    ax.set_title(f"confusion: {domain}")
    fig.colorbar(im, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
