"""Network component tests: shape contracts, the residual identity, head
behavior, and reversal-layer gradient symmetry."""

import numpy as np
import pytest

import cpsda.diffcore as dc
from cpsda import nets
from cpsda.errors import ShapeMismatch


def _model(latent_dim=32, use_norm=False, seed=0):
    rng = np.random.default_rng(seed)
    return nets.ModelParams.init(rng, f_source=23, f_target=60,
                                 latent_dim=latent_dim,
                                 conv_channels=(8, 16), stem_channels=8,
                                 head_hidden=16, use_norm=use_norm)


def _windows(batch, length, features, seed=0):
    rng = np.random.default_rng(seed)
    return dc.constant(rng.normal(size=(batch, length, features)).astype(np.float32))


def test_encode_shapes_at_full_width():
    rng = np.random.default_rng(1)
    model = nets.ModelParams.init(rng, f_source=23, f_target=60, latent_dim=512)
    hs = nets.encode_source(model.source_encoder, _windows(4, 25, 23))
    ht = nets.encode_target(model.target_encoder, _windows(4, 25, 60))
    assert hs.shape == (4, 512)
    assert ht.shape == (4, 512)


def test_zero_projection_head_gives_zero_latents():
    model = _model()
    enc = model.source_encoder
    enc.proj.w.data[...] = 0.0
    enc.proj.b.data[...] = 0.0
    h = nets.encode_source(enc, _windows(3, 25, 23))
    assert np.array_equal(h.data, np.zeros((3, 32)))


def test_eval_mode_is_deterministic():
    model = _model(use_norm=True)
    x = _windows(5, 25, 23)
    a = nets.encode_source(model.source_encoder, x, training=False)
    b = nets.encode_source(model.source_encoder, x, training=False)
    np.testing.assert_array_equal(a.data, b.data)


def test_encoders_reject_wrong_feature_width():
    model = _model()
    with pytest.raises(ShapeMismatch):
        nets.encode_target(model.target_encoder, _windows(4, 25, 23))
    with pytest.raises(ShapeMismatch):
        nets.encode_source(model.source_encoder, _windows(4, 25, 60))
    with pytest.raises(ShapeMismatch):
        nets.encode_source(model.source_encoder, dc.constant(np.ones((4, 23))))


def test_residual_block_with_zero_inner_weights_is_identity():
    rng = np.random.default_rng(2)
    block = nets.ResidualBlock.init(rng, channels=6, dtype=np.float64)
    for layer in (block.conv_a, block.conv_b):
        layer.kernels.data[...] = 0.0
        layer.bias.data[...] = 0.0
    x = dc.constant(rng.normal(size=(3, 10, 6)))  # negative entries included
    out = block(x)
    np.testing.assert_array_equal(out.data, x.data)


def test_residual_block_gradient_reaches_input_through_skip():
    rng = np.random.default_rng(3)
    block = nets.ResidualBlock.init(rng, channels=4, dtype=np.float64)
    for layer in (block.conv_a, block.conv_b):
        layer.kernels.data[...] = 0.0
        layer.bias.data[...] = 0.0
    x = dc.param(rng.normal(size=(2, 6, 4)))
    dc.backward(dc.sum_all(block(x)))
    np.testing.assert_array_equal(x.grad, np.ones_like(x.data))


def test_classifier_zero_weights_give_half():
    model = _model()
    head = model.classifier
    for _, t in head.tensors("c"):
        t.data[...] = 0.0
    p = nets.classify(head, dc.constant(np.random.default_rng(4).normal(size=(6, 32)).astype(np.float32)))
    np.testing.assert_allclose(p.data, np.full(6, 0.5), atol=1e-7)


def test_classifier_saturates_on_large_logit():
    model = _model()
    head = model.classifier
    head.fc1.w.data[...] = 1.0
    head.fc1.b.data[...] = 10.0
    head.fc2.w.data[...] = 10.0
    head.fc2.b.data[...] = 0.0
    p = nets.classify(head, dc.constant(np.zeros((2, 32), dtype=np.float32)))
    assert (p.data > 0.9999).all()


def test_classifier_output_shape_and_range():
    model = _model()
    latents = dc.constant(np.random.default_rng(5).normal(size=(8, 32)).astype(np.float32))
    p = nets.classify(model.classifier, latents)
    assert p.shape == (8,)
    assert ((p.data > 0) & (p.data < 1)).all()


def test_classifier_rejects_wrong_latent_dim():
    model = _model()
    with pytest.raises(ShapeMismatch):
        nets.classify(model.classifier, dc.constant(np.zeros((4, 33), dtype=np.float32)))


def test_discriminate_forward_invariant_to_lambda():
    model = _model()
    latents = dc.constant(np.random.default_rng(6).normal(size=(7, 32)).astype(np.float32))
    p0 = nets.discriminate(model.discriminator, latents, lambda_grl=0.0)
    p5 = nets.discriminate(model.discriminator, latents, lambda_grl=5.0)
    np.testing.assert_array_equal(p0.data, p5.data)


def test_discriminate_gradient_flips_sign_with_lambda():
    rng = np.random.default_rng(7)
    model = _model()
    latents_data = rng.normal(size=(4, 32)).astype(np.float32)
    grads = {}
    for lam in (2.0, -2.0):
        latents = dc.param(latents_data.copy())
        p = nets.discriminate(model.discriminator, latents, lambda_grl=lam)
        dc.backward(dc.sum_all(p))
        grads[lam] = latents.grad.copy()
    np.testing.assert_allclose(grads[2.0], -grads[-2.0], rtol=1e-6)
    assert np.abs(grads[2.0]).max() > 0


def test_parameter_count_matches_summary_total():
    model = _model(use_norm=True)
    summary = nets.model_summary(model)
    total_line = summary.strip().splitlines()[-1]
    assert total_line.startswith("total")
    assert int(total_line.split()[-1]) == model.parameter_count()
    # one row per tensor plus header and total
    assert len(summary.splitlines()) == len(model.tensors()) + 2


def test_use_norm_adds_parameters_and_buffers():
    plain, normed = _model(use_norm=False), _model(use_norm=True)
    assert normed.parameter_count() > plain.parameter_count()
    assert plain.buffers() == []
    names = [n for n, _ in normed.buffers()]
    assert any("running_mean" in n for n in names)
    assert any("running_var" in n for n in names)


def test_tensor_names_are_unique():
    model = _model(use_norm=True)
    names = [n for n, _ in model.tensors()]
    assert len(names) == len(set(names))
