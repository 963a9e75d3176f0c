"""Confusion-matrix metrics and per-domain evaluation reports.

Positive class is the anomaly (label 1) throughout. Accuracy is reported
as a percentage; precision, recall, and F1 stay in [0, 1], with
zero-denominator ratios reported as 0 and flagged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cluster import Centroids, decide_batch
from .datamodel import SequenceSet
from .errors import EmptyMatrix, LabelDomain, LengthMismatch, UnmappedCentroids
from .nets import ModelParams
from .train import encode_set


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(true_labels, predicted_labels) -> ConfusionMatrix:
    y = np.asarray(true_labels)
    yhat = np.asarray(predicted_labels)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"labels {y.shape} vs predictions {yhat.shape}")
    for name, arr in (("true", y), ("predicted", yhat)):
        bad = set(np.unique(arr).tolist()) - {0, 1}
        if bad:
            raise LabelDomain(f"{name} labels outside {{0,1}}: {sorted(bad)}")
    return ConfusionMatrix(
        tp=int(((y == 1) & (yhat == 1)).sum()),
        fp=int(((y == 0) & (yhat == 1)).sum()),
        tn=int(((y == 0) & (yhat == 0)).sum()),
        fn=int(((y == 1) & (yhat == 0)).sum()),
    )


@dataclass(frozen=True)
class EvalReport:
    domain: str
    sample_count: int
    accuracy: float | None  # percent
    precision: float | None
    recall: float | None
    f1: float | None
    undefined_precision: bool = False
    undefined_recall: bool = False
    undefined_f1: bool = False
    anomaly_rate: float | None = None
    mean_dist_benign: float | None = None
    mean_dist_anomaly: float | None = None


def metrics(cm: ConfusionMatrix, domain: str = "") -> EvalReport:
    total = cm.total
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    accuracy = 100.0 * (cm.tp + cm.tn) / total
    undef_p = cm.tp + cm.fp == 0
    undef_r = cm.tp + cm.fn == 0
    precision = 0.0 if undef_p else cm.tp / (cm.tp + cm.fp)
    recall = 0.0 if undef_r else cm.tp / (cm.tp + cm.fn)
    undef_f1 = precision + recall == 0
    f1 = 0.0 if undef_f1 else 2 * precision * recall / (precision + recall)
    return EvalReport(domain=domain, sample_count=total, accuracy=accuracy,
                      precision=precision, recall=recall, f1=f1,
                      undefined_precision=undef_p, undefined_recall=undef_r,
                      undefined_f1=undef_f1)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; no averaging variants."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _centroid_summary(latents: np.ndarray, centroids: Centroids) -> dict:
    d_b = np.linalg.norm(latents - centroids.benign_mu, axis=1)
    d_a = np.linalg.norm(latents - centroids.anomaly_mu, axis=1)
    return {"mean_dist_benign": float(d_b.mean()),
            "mean_dist_anomaly": float(d_a.mean())}


def evaluate_domain(model: ModelParams, centroids: Centroids,
                    sequences: SequenceSet, domain: str,
                    withheld_labels: np.ndarray | None = None
                    ) -> tuple[EvalReport, np.ndarray]:
    """Encode a sequence set with its domain's encoder, decide per sample
    against the mapped centroids, and score against withheld labels.

    Without labels the report carries predictions-only fields (metrics
    absent). Returns (report, predictions).
    """
    if centroids.class_of is None:
        raise UnmappedCentroids("centroids must be class-mapped before evaluation")
    latents = encode_set(model, sequences)
    predictions = decide_batch(latents, centroids)
    summary = _centroid_summary(latents, centroids)
    labels = withheld_labels if withheld_labels is not None else sequences.labels
    if labels is None:
        report = EvalReport(domain=domain, sample_count=len(predictions),
                            accuracy=None, precision=None, recall=None, f1=None,
                            anomaly_rate=float(predictions.mean()),
                            **summary)
        return report, predictions
    cm = confusion(np.asarray(labels), predictions)
    core = metrics(cm, domain=domain)
    report = EvalReport(domain=domain, sample_count=core.sample_count,
                        accuracy=core.accuracy, precision=core.precision,
                        recall=core.recall, f1=core.f1,
                        undefined_precision=core.undefined_precision,
                        undefined_recall=core.undefined_recall,
                        undefined_f1=core.undefined_f1,
                        anomaly_rate=float(predictions.mean()),
                        **summary)
    return report, predictions


def report_to_json(report: EvalReport) -> str:
    """One JSON object per domain; ratio metrics round to 4 decimals while
    remaining numbers."""
    payload: dict = {"domain": report.domain, "sample_count": report.sample_count}
    if report.accuracy is not None:
        payload.update({
            "accuracy": round(report.accuracy, 4),
            "precision": round(report.precision, 4),
            "recall": round(report.recall, 4),
            "f1": round(report.f1, 4),
        })
        flags = {name: True for name, hit in (
            ("undefined_precision", report.undefined_precision),
            ("undefined_recall", report.undefined_recall),
            ("undefined_f1", report.undefined_f1)) if hit}
        payload.update(flags)
    else:
        payload["predictions_only"] = True
    if report.anomaly_rate is not None:
        payload["anomaly_rate"] = round(report.anomaly_rate, 6)
    if report.mean_dist_benign is not None:
        payload["mean_dist_benign"] = round(report.mean_dist_benign, 6)
        payload["mean_dist_anomaly"] = round(report.mean_dist_anomaly, 6)
    return json.dumps(payload, sort_keys=True)
