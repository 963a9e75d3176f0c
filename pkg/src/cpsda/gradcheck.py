"""Finite-difference verification of the full training objective on a
miniature double-precision model.

The domain term flows through the gradient reversal, so its backward pass
is the gradient of an effective objective: for parameters upstream of the
reversal the finite difference of the forward loss must be scaled by
-lambda_grl before comparison. Head parameters compare directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import nets
from .losses import LossWeights, bce, dunn_loss, triplet_margin_loss
from .triplets import TemporalWindowConfig, sample_supervised, sample_temporal

THRESHOLD = 1e-5

TINY_LATENT_DIM = 8
TINY_BATCH = 4
_TINY_L = 10
_TINY_F_SOURCE = 5
_TINY_F_TARGET = 7
_TINY_WIDTH = 6


@dataclass
class TinyProblem:
    model: nets.ModelParams
    src_anchors: np.ndarray
    src_positives: np.ndarray
    src_negatives: np.ndarray
    src_labels: np.ndarray
    tgt_anchors: np.ndarray
    tgt_positives: np.ndarray
    tgt_negatives: np.ndarray
    domain_targets: np.ndarray


def build_tiny_problem(seed: int = 7) -> TinyProblem:
    """Fixed miniature batch: latent dim 8, batch 4, double precision."""
    rng = np.random.default_rng(seed)
    model = nets.ModelParams.init(
        rng, _TINY_F_SOURCE, _TINY_F_TARGET, TINY_LATENT_DIM,
        conv_channels=(_TINY_WIDTH, _TINY_WIDTH), stem_channels=_TINY_WIDTH,
        n_blocks=1, head_hidden=TINY_LATENT_DIM, use_norm=True,
        dtype=np.float64)

    n_pool = 16
    src_pool = rng.normal(size=(n_pool, _TINY_L, _TINY_F_SOURCE))
    src_pool_labels = np.array([0, 1] * (n_pool // 2), dtype=np.int64)
    tgt_pool = rng.normal(size=(n_pool, _TINY_L, _TINY_F_TARGET))

    src_anchor_idx = np.arange(TINY_BATCH)
    trip_s = sample_supervised(src_pool_labels, src_anchor_idx, rng)
    tgt_anchor_idx = np.arange(4, 4 + TINY_BATCH)
    trip_t = sample_temporal(n_pool, TemporalWindowConfig(w_p=2, w_n=5),
                             tgt_anchor_idx, rng)

    return TinyProblem(
        model=model,
        src_anchors=src_pool[src_anchor_idx],
        src_positives=src_pool[[t.positive_idx for t in trip_s]],
        src_negatives=src_pool[[t.negative_idx for t in trip_s]],
        src_labels=src_pool_labels[src_anchor_idx].astype(np.float64),
        tgt_anchors=tgt_pool[tgt_anchor_idx],
        tgt_positives=tgt_pool[[t.positive_idx for t in trip_t]],
        tgt_negatives=tgt_pool[[t.negative_idx for t in trip_t]],
        domain_targets=np.concatenate([np.zeros(TINY_BATCH), np.ones(TINY_BATCH)]),
    )


def _term_builders(prob: TinyProblem, margin: float, lambda_grl: float):
    """Each closure rebuilds the training-step forward graph: stacked
    anchor/positive/negative encodes in training mode, sliced back out,
    exactly as the train step composes them."""
    model = prob.model
    b = TINY_BATCH

    def _triple(encode, params, a, p, n):
        stack = dc.constant(np.concatenate([a, p, n], axis=0))
        h = encode(params, stack, training=True)
        return (dc.gather_rows(h, np.arange(b)),
                dc.gather_rows(h, np.arange(b, 2 * b)),
                dc.gather_rows(h, np.arange(2 * b, 3 * b)))

    def _source_triple():
        return _triple(nets.encode_source, model.source_encoder,
                       prob.src_anchors, prob.src_positives, prob.src_negatives)

    def _target_triple():
        return _triple(nets.encode_target, model.target_encoder,
                       prob.tgt_anchors, prob.tgt_positives, prob.tgt_negatives)

    def f_triplet() -> dc.Tensor:
        h_a, h_p, h_n = _source_triple()
        t_a, t_p, t_n = _target_triple()
        return dc.add(triplet_margin_loss(h_a, h_p, h_n, margin),
                      triplet_margin_loss(t_a, t_p, t_n, margin))

    def f_bce() -> dc.Tensor:
        h_a, _, _ = _source_triple()
        return bce(nets.classify(model.classifier, h_a), prob.src_labels)

    def f_dunn() -> dc.Tensor:
        h_a, _, _ = _source_triple()
        return dunn_loss(h_a, prob.src_labels.astype(np.int64))

    def f_domain() -> dc.Tensor:
        h_a, _, _ = _source_triple()
        t_a, _, _ = _target_triple()
        h = dc.concat_rows([h_a, t_a])
        probs = nets.discriminate(model.discriminator, h, lambda_grl)
        return bce(probs, prob.domain_targets)

    return f_triplet, f_bce, f_dunn, f_domain


def run_gradcheck(lambda_grl: float = 1.0, weights: LossWeights | None = None,
                  margin: float = 1.0, seed: int = 7,
                  eps: float = 1e-5) -> dict[str, float]:
    """Max relative error per loss term and for the combined objective."""
    weights = weights or LossWeights()
    prob = build_tiny_problem(seed)
    params = [t for _, t in prob.model.tensors()]
    disc_ids = {id(t) for _, t in prob.model.discriminator.tensors("d")}

    def domain_scale(p: dc.Tensor) -> float:
        # parameters upstream of the reversal see -lambda_grl times the
        # forward loss's finite difference
        return 1.0 if id(p) in disc_ids else -lambda_grl

    f_triplet, f_bce, f_dunn, f_domain = _term_builders(prob, margin, lambda_grl)

    errors = {
        "triplet": dc.grad_check(f_triplet, params, eps),
        "bce": dc.grad_check(f_bce, params, eps),
        "dunn": dc.grad_check(f_dunn, params, eps),
        "domain": dc.grad_check(f_domain, params, eps, fd_scale=domain_scale),
    }

    def f_adapt() -> dc.Tensor:
        tml = f_triplet()
        return dc.add(dc.add(dc.scale(f_dunn(), weights.lambda_dunn),
                             dc.scale(tml, weights.lambda_tml)),
                      dc.scale(f_bce(), weights.lambda_class))

    def f_dom_weighted() -> dc.Tensor:
        return dc.scale(f_domain(), weights.lambda_domain)

    errors["combined"] = dc.grad_check_sum(
        [(f_adapt, lambda p: 1.0), (f_dom_weighted, domain_scale)], params, eps)
    return errors
