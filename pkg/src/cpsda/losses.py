"""Training objectives: triplet margin loss, binary cross-entropy, the
inverse-Dunn cluster-shaping loss, and their weighted composites.

All loss functions return scalar Tensors so one backward pass covers the
whole objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import DegenerateBatch, InvalidConfig, ShapeMismatch

BCE_EPS = 1e-7
DUNN_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Weights of the composite objectives; the adaptation side combines
    the Dunn, triplet, and classification terms, the domain side scales
    the discriminator's BCE."""

    lambda_dunn: float = 1.0
    lambda_tml: float = 0.1
    lambda_class: float = 1.0
    lambda_domain: float = 1.0

    def __post_init__(self):
        for name in ("lambda_dunn", "lambda_tml", "lambda_class", "lambda_domain"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 1.0

    def __post_init__(self):
        if self.margin <= 0:
            raise InvalidConfig(f"margin must be > 0, got {self.margin}")


def _pair_distance(a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distance per row of two equal-shape (B, D) tensors."""
    diff = dc.sub(a, b)
    return dc.sqrt(dc.rowsum(dc.mul(diff, diff)))


def triplet_margin_loss(anchors: Tensor, positives: Tensor, negatives: Tensor,
                        margin: float = 1.0) -> Tensor:
    """Batch mean of max{d(a,p) - d(a,n) + margin, 0}, d = Euclidean."""
    if not anchors.shape == positives.shape == negatives.shape:
        raise ShapeMismatch(
            f"triplet batches disagree: {anchors.shape}, {positives.shape}, "
            f"{negatives.shape}")
    d_ap = _pair_distance(anchors, positives)
    d_an = _pair_distance(anchors, negatives)
    hinge = dc.relu(dc.add_scalar(dc.sub(d_ap, d_an), float(margin)))
    return dc.mean_all(hinge)


def bce(predictions: Tensor, targets: np.ndarray, eps: float = BCE_EPS) -> Tensor:
    """Mean of -[y log p + (1-y) log(1-p)] with p clamped to [eps, 1-eps]."""
    targets = np.asarray(targets, dtype=predictions.dtype)
    if predictions.shape != targets.shape:
        raise ShapeMismatch(
            f"bce: predictions {predictions.shape} vs targets {targets.shape}")
    p = dc.clamp(predictions, eps, 1.0 - eps)
    y = dc.constant(targets)
    one_minus_y = dc.constant(1.0 - targets)
    pos = dc.mul(y, dc.log(p))
    neg_term = dc.mul(one_minus_y, dc.log(dc.add_scalar(dc.neg(p), 1.0)))
    return dc.neg(dc.mean_all(dc.add(pos, neg_term)))


def _extreme_pairs(points: np.ndarray, labels: np.ndarray) -> tuple[tuple[int, int], tuple[int, int]]:
    """Indices of the max same-class pair and the min cross-class pair."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    cross = labels[:, None] != labels[None, :]
    intra = np.where(same, dist, -np.inf)
    inter = np.where(cross, dist, np.inf)
    i_intra = np.unravel_index(np.argmax(intra), dist.shape)
    i_inter = np.unravel_index(np.argmin(inter), dist.shape)
    return (int(i_intra[0]), int(i_intra[1])), (int(i_inter[0]), int(i_inter[1]))


def dunn_loss(latents: Tensor, class_labels: np.ndarray,
              eps: float = DUNN_EPS) -> Tensor:
    """(max intra-class diameter + eps) / (min cross-class distance + eps),
    the inverse Dunn Index up to eps.

    The extreme pairs are located outside the tape; only the two chosen
    pair distances enter the graph, which is the almost-everywhere
    derivative of the min/max composition.
    """
    labels = np.asarray(class_labels)
    if latents.shape[0] != labels.shape[0]:
        raise ShapeMismatch(
            f"dunn_loss: {latents.shape[0]} latents vs {labels.shape[0]} labels")
    present, counts = np.unique(labels, return_counts=True)
    if len(present) < 2:
        raise DegenerateBatch(f"dunn_loss needs 2 classes, got {present.tolist()}")
    if counts.min() < 2:
        lone = present[counts.argmin()]
        raise DegenerateBatch(f"class {lone} has a single member")
    (ia, ib), (ja, jb) = _extreme_pairs(latents.data, labels)
    d_intra = dc.sum_all(_pair_distance(dc.gather_rows(latents, [ia]),
                                        dc.gather_rows(latents, [ib])))
    d_inter = dc.sum_all(_pair_distance(dc.gather_rows(latents, [ja]),
                                        dc.gather_rows(latents, [jb])))
    return dc.div(dc.add_scalar(d_intra, eps), dc.add_scalar(d_inter, eps))


def total_adapt_loss(l_dunn: Tensor, l_tml: Tensor, l_class: Tensor,
                     weights: LossWeights) -> Tensor:
    """lambda_dunn * L_Dunn + lambda_tml * L_TML + lambda_class * L_class;
    L_TML is the (already summed) source + target triplet loss."""
    return dc.add(dc.add(dc.scale(l_dunn, weights.lambda_dunn),
                         dc.scale(l_tml, weights.lambda_tml)),
                  dc.scale(l_class, weights.lambda_class))


def domain_objective(l_domain: Tensor, weights: LossWeights) -> Tensor:
    """lambda_domain * L_domain; the adversarial push on the encoders comes
    solely from the reversal layer inside the discriminator path."""
    return dc.scale(l_domain, weights.lambda_domain)
