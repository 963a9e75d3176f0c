"""Analytic-vs-finite-difference agreement for every loss term on the
miniature double-precision model."""

import time

import numpy as np
import pytest

from cpsda import diffcore as dc
from cpsda.gradcheck import (
    THRESHOLD,
    TinyProblem,
    build_tiny_problem,
    run_gradcheck,
)

EXPECTED_TERMS = {"triplet", "bce", "dunn", "domain", "combined"}


def test_default_run_passes_threshold_within_budget():
    start = time.monotonic()
    errors = run_gradcheck()
    elapsed = time.monotonic() - start
    assert set(errors) == EXPECTED_TERMS
    for term, err in errors.items():
        assert err < THRESHOLD, f"{term}: {err}"
    assert elapsed < 60.0


@pytest.mark.parametrize("lambda_grl", [0.0, 0.5, 3.0])
def test_reversal_strength_does_not_break_agreement(lambda_grl):
    errors = run_gradcheck(lambda_grl=lambda_grl)
    assert errors["domain"] < THRESHOLD
    assert errors["combined"] < THRESHOLD


def test_tiny_problem_is_deterministic():
    a = build_tiny_problem(seed=11)
    b = build_tiny_problem(seed=11)
    assert isinstance(a, TinyProblem)
    assert np.array_equal(a.src_anchors, b.src_anchors)
    assert np.array_equal(a.tgt_negatives, b.tgt_negatives)
    for (name_a, t_a), (name_b, t_b) in zip(a.model.tensors(),
                                            b.model.tensors()):
        assert name_a == name_b
        assert np.array_equal(t_a.data, t_b.data)
    assert a.model.source_encoder.conv1.kernels.data.dtype == np.float64


def test_planted_backward_error_is_detected(monkeypatch):
    # negative control: biasing one backward rule by 5% must blow past the
    # threshold by orders of magnitude
    real = dc.mean_pool_time

    def corrupted(x):
        out = real(x)
        inner = out._backward

        def backward(g):
            return tuple(1.05 * grad for grad in inner(g))

        out._backward = backward
        return out

    monkeypatch.setattr(dc, "mean_pool_time", corrupted)
    errors = run_gradcheck()
    assert max(errors.values()) > 1e-3
