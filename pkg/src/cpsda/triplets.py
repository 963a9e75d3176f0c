"""Triplet generation: label-driven for the labeled source domain,
temporal-proximity-driven for the unlabeled target domain.

Both samplers draw uniformly from the exact candidate sets (no clipping),
so the emitted triplets satisfy their constraints by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ClassExhausted, WindowInfeasible

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triplet:
    anchor_idx: int
    positive_idx: int
    negative_idx: int


@dataclass(frozen=True)
class TemporalWindowConfig:
    """W_p: positive radius; W_n: negative minimum gap, both in sequence
    indices. W_n is meant to exceed typical burst length so negatives
    usually land in a different regime."""

    w_p: int = 5
    w_n: int = 100

    def __post_init__(self):
        if not 1 <= self.w_p < self.w_n:
            raise WindowInfeasible(
                f"need 1 <= W_p < W_n, got W_p={self.w_p}, W_n={self.w_n}")


def sample_supervised(labels: np.ndarray, batch_anchors: Sequence[int],
                      rng: np.random.Generator) -> list[Triplet]:
    """For each anchor with label y: positive uniform over other samples
    with label y, negative uniform over samples with label 1-y."""
    labels = np.asarray(labels)
    by_class = {c: np.flatnonzero(labels == c) for c in (0, 1)}
    triplets: list[Triplet] = []
    for a in batch_anchors:
        a = int(a)
        y = int(labels[a])
        own = by_class[y]
        other = by_class[1 - y]
        if len(own) < 2:
            raise ClassExhausted(
                f"class {y} has {len(own)} samples; need a positive besides the anchor")
        if len(other) < 1:
            raise ClassExhausted(f"class {1 - y} has no samples for negatives")
        # index trick skips the anchor without rejection sampling
        own_pos = int(np.searchsorted(own, a))
        draw = int(rng.integers(len(own) - 1))
        p = int(own[draw + 1 if draw >= own_pos else draw])
        n = int(other[rng.integers(len(other))])
        triplets.append(Triplet(a, p, n))
    return triplets


def _positive_index(a: int, n: int, w_p: int, rng: np.random.Generator) -> int | None:
    lo = max(0, a - w_p)
    hi = min(n - 1, a + w_p)
    size = hi - lo  # excludes the anchor itself
    if size <= 0:
        return None
    j = lo + int(rng.integers(size))
    return j + 1 if j >= a else j


def _negative_index(a: int, n: int, w_n: int, rng: np.random.Generator) -> int | None:
    left = max(0, a - w_n + 1)
    right = max(0, n - (a + w_n))
    if left + right == 0:
        return None
    r = int(rng.integers(left + right))
    return r if r < left else a + w_n + (r - left)


def sample_temporal(n_sequences: int, cfg: TemporalWindowConfig,
                    batch_anchors: Sequence[int], rng: np.random.Generator,
                    skip_infeasible: bool = False) -> list[Triplet]:
    """Positive uniform over {j != a : |j - a| <= W_p}; negative uniform
    over {j : |j - a| >= W_n}.

    An anchor whose candidate set is empty raises WindowInfeasible, or is
    skipped with a log line when skip_infeasible is set (the training loop
    uses the latter).
    """
    triplets: list[Triplet] = []
    skipped = 0
    for a in batch_anchors:
        a = int(a)
        p = _positive_index(a, n_sequences, cfg.w_p, rng)
        n = _negative_index(a, n_sequences, cfg.w_n, rng)
        if p is None or n is None:
            which = "positive" if p is None else "negative"
            if skip_infeasible:
                skipped += 1
                continue
            raise WindowInfeasible(
                f"anchor {a} of {n_sequences} sequences has an empty {which} set "
                f"(W_p={cfg.w_p}, W_n={cfg.w_n})")
        triplets.append(Triplet(a, p, n))
    if skipped:
        log.warning("skipped %d infeasible triplet anchors of %d",
                    skipped, len(batch_anchors))
    return triplets
