"""Report artifact tests: CSV shape and figure files actually rendering."""

import csv

import numpy as np

from cpsda.cluster import Centroids
from cpsda.evaluate import ConfusionMatrix, EvalReport
from cpsda.report import (save_confusion_figure, save_history_csv,
                          save_latent_figure, save_loss_figure,
                          save_metrics_csv)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _history():
    return {"total": [3.0, 2.0, 1.5], "class": [0.5, 0.4, 0.3],
            "domain": [0.7, 0.6, 0.65]}


def test_history_csv_round_trips_exact_floats(tmp_path):
    path = tmp_path / "history.csv"
    history = {"total": [1.0 / 3.0, 2.0 / 7.0], "domain": [0.1, 0.2]}
    save_history_csv(history, path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "total", "domain"]
    assert len(rows) == 3
    assert float(rows[1][1]) == history["total"][0]  # repr keeps full precision
    assert [r[0] for r in rows[1:]] == ["0", "1"]


def test_metrics_csv_blank_for_absent_metrics(tmp_path):
    path = tmp_path / "metrics.csv"
    labeled = EvalReport(domain="source", sample_count=10, accuracy=90.0,
                         precision=0.8, recall=0.9, f1=0.8470588,
                         anomaly_rate=0.4)
    unlabeled = EvalReport(domain="target", sample_count=5, accuracy=None,
                           precision=None, recall=None, f1=None,
                           anomaly_rate=0.2)
    save_metrics_csv([labeled, unlabeled], path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["domain", "sample_count", "accuracy"]
    assert rows[1][0] == "source" and rows[1][2] == "90.0"
    assert rows[2][0] == "target" and rows[2][2] == ""


def test_loss_figure_renders(tmp_path):
    path = tmp_path / "loss.png"
    save_loss_figure(_history(), path)
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_confusion_figure_renders(tmp_path):
    path = tmp_path / "confusion.png"
    save_confusion_figure(ConfusionMatrix(tp=5, fp=2, tn=10, fn=1), "source", path)
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_latent_figure_renders_with_centroids(tmp_path):
    rng = np.random.default_rng(41)
    latents = {"source": rng.normal(size=(50, 16)).astype(np.float32),
               "target": rng.normal(size=(40, 16)).astype(np.float32)}
    preds = {"source": rng.integers(0, 2, 50), "target": rng.integers(0, 2, 40)}
    centroids = Centroids(mu=rng.normal(size=(2, 16)).astype(np.float32),
                          class_of=(0, 1))
    path = tmp_path / "latent.png"
    save_latent_figure(latents, preds, centroids, path)
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_latent_figure_subsamples_large_domains(tmp_path):
    rng = np.random.default_rng(42)
    latents = {"source": rng.normal(size=(5000, 8)).astype(np.float32)}
    preds = {"source": rng.integers(0, 2, 5000)}
    path = tmp_path / "latent.png"
    save_latent_figure(latents, preds, None, path, max_points_per_domain=100)
    assert path.read_bytes()[:8] == PNG_MAGIC
