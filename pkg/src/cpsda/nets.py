"""The four learned components: source encoder, target encoder (residual),
label classifier, and domain discriminator.

Layer sizes follow the declared defaults (conv widths 64/128, head hidden
width 128) and are constructor arguments so the gradient checker can build
a miniature model with the same wiring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ShapeMismatch

NORM_MOMENTUM = 0.1


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                dtype) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return dc.param(rng.uniform(-bound, bound, size=shape).astype(dtype))


def _zeros(shape: tuple[int, ...], dtype) -> Tensor:
    return dc.param(np.zeros(shape, dtype=dtype))


@dataclass
class ConvLayer:
    kernels: Tensor  # (K, C_in, C_out)
    bias: Tensor

    @staticmethod
    def init(rng, c_in: int, c_out: int, k: int, dtype) -> "ConvLayer":
        return ConvLayer(kernels=_he_uniform(rng, (k, c_in, c_out), k * c_in, dtype),
                         bias=_zeros((c_out,), dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return dc.conv1d(x, self.kernels, self.bias, stride=1, padding=1)

    def tensors(self, prefix: str):
        return [(f"{prefix}.kernels", self.kernels), (f"{prefix}.bias", self.bias)]


@dataclass
class DenseLayer:
    w: Tensor
    b: Tensor

    @staticmethod
    def init(rng, d_in: int, d_out: int, dtype) -> "DenseLayer":
        return DenseLayer(w=_he_uniform(rng, (d_in, d_out), d_in, dtype),
                          b=_zeros((d_out,), dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return dc.dense(x, self.w, self.b)

    def tensors(self, prefix: str):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


@dataclass
class NormLayer:
    """Optional per-channel normalization with learned affine and running
    statistics (momentum 0.1 at train time, running averages at eval)."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray

    @staticmethod
    def init(c: int, dtype) -> "NormLayer":
        return NormLayer(gamma=dc.param(np.ones(c, dtype=dtype)),
                         beta=_zeros((c,), dtype),
                         running_mean=np.zeros(c, dtype=dtype),
                         running_var=np.ones(c, dtype=dtype))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return dc.batch_mean_var_norm(x, self.gamma, self.beta,
                                      self.running_mean, self.running_var,
                                      training, momentum=NORM_MOMENTUM)

    def tensors(self, prefix: str):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta", self.beta)]

    def buffers(self, prefix: str):
        return [(f"{prefix}.running_mean", self.running_mean),
                (f"{prefix}.running_var", self.running_var)]


@dataclass
class SourceEncoderParams:
    """conv(F_s -> c1) -> relu -> conv(c1 -> c2) -> relu -> mean pool ->
    dense(c2 -> latent_dim) -> optional latent norm.

    The norm standardizes the latent itself: both domains' clouds then share
    position and scale by construction instead of relying on the adversarial
    pressure alone to keep them together."""

    in_features: int
    latent_dim: int
    conv1: ConvLayer
    conv2: ConvLayer
    proj: DenseLayer
    norm: NormLayer | None = None

    @staticmethod
    def init(rng, in_features: int, latent_dim: int,
             conv_channels: tuple[int, int] = (64, 128),
             use_norm: bool = False, dtype=np.float32) -> "SourceEncoderParams":
        c1, c2 = conv_channels
        return SourceEncoderParams(
            in_features=in_features,
            latent_dim=latent_dim,
            conv1=ConvLayer.init(rng, in_features, c1, 3, dtype),
            conv2=ConvLayer.init(rng, c1, c2, 3, dtype),
            proj=DenseLayer.init(rng, c2, latent_dim, dtype),
            norm=NormLayer.init(latent_dim, dtype) if use_norm else None,
        )

    def tensors(self, prefix: str = "source_encoder"):
        out = (self.conv1.tensors(f"{prefix}.conv1")
               + self.conv2.tensors(f"{prefix}.conv2")
               + self.proj.tensors(f"{prefix}.proj"))
        if self.norm is not None:
            out += self.norm.tensors(f"{prefix}.norm")
        return out

    def buffers(self, prefix: str = "source_encoder"):
        return self.norm.buffers(f"{prefix}.norm") if self.norm is not None else []


@dataclass
class ResidualBlock:
    """out = relu(conv(relu(conv(x)))) + x; zeroed inner weights make the
    block an exact identity for any input."""

    conv_a: ConvLayer
    conv_b: ConvLayer

    @staticmethod
    def init(rng, channels: int, dtype) -> "ResidualBlock":
        return ResidualBlock(conv_a=ConvLayer.init(rng, channels, channels, 3, dtype),
                             conv_b=ConvLayer.init(rng, channels, channels, 3, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        inner = self.conv_b(dc.relu(self.conv_a(x)))
        return dc.add(dc.relu(inner), x)

    def tensors(self, prefix: str):
        return self.conv_a.tensors(f"{prefix}.conv_a") + self.conv_b.tensors(f"{prefix}.conv_b")


@dataclass
class TargetEncoderParams:
    """conv stem -> relu -> residual blocks -> mean pool -> dense projection
    -> optional latent norm (same role as in the source encoder)."""

    in_features: int
    latent_dim: int
    stem: ConvLayer
    blocks: list[ResidualBlock]
    proj: DenseLayer
    norm: NormLayer | None = None

    @staticmethod
    def init(rng, in_features: int, latent_dim: int, stem_channels: int = 64,
             n_blocks: int = 2, use_norm: bool = False,
             dtype=np.float32) -> "TargetEncoderParams":
        return TargetEncoderParams(
            in_features=in_features,
            latent_dim=latent_dim,
            stem=ConvLayer.init(rng, in_features, stem_channels, 3, dtype),
            blocks=[ResidualBlock.init(rng, stem_channels, dtype) for _ in range(n_blocks)],
            proj=DenseLayer.init(rng, stem_channels, latent_dim, dtype),
            norm=NormLayer.init(latent_dim, dtype) if use_norm else None,
        )

    def tensors(self, prefix: str = "target_encoder"):
        out = self.stem.tensors(f"{prefix}.stem")
        for i, block in enumerate(self.blocks):
            out += block.tensors(f"{prefix}.block{i}")
        out += self.proj.tensors(f"{prefix}.proj")
        if self.norm is not None:
            out += self.norm.tensors(f"{prefix}.norm")
        return out

    def buffers(self, prefix: str = "target_encoder"):
        return self.norm.buffers(f"{prefix}.norm") if self.norm is not None else []


@dataclass
class HeadParams:
    """dense(latent -> hidden) -> relu -> dense(hidden -> 1 logit)."""

    latent_dim: int
    fc1: DenseLayer
    fc2: DenseLayer

    @staticmethod
    def init(rng, latent_dim: int, hidden: int = 128, dtype=np.float32) -> "HeadParams":
        return HeadParams(latent_dim=latent_dim,
                          fc1=DenseLayer.init(rng, latent_dim, hidden, dtype),
                          fc2=DenseLayer.init(rng, hidden, 1, dtype))

    def logits(self, latents: Tensor) -> Tensor:
        if latents.shape[-1] != self.latent_dim:
            raise ShapeMismatch(
                f"head expects latent_dim {self.latent_dim}, got {latents.shape[-1]}")
        return self.fc2(dc.relu(self.fc1(latents)))

    def tensors(self, prefix: str):
        return self.fc1.tensors(f"{prefix}.fc1") + self.fc2.tensors(f"{prefix}.fc2")


ClassifierParams = HeadParams
DiscriminatorParams = HeadParams


def _check_windows(x: Tensor, expected_features: int, who: str) -> None:
    if x.data.ndim != 3 or x.shape[2] != expected_features:
        raise ShapeMismatch(
            f"{who} expects (B, L, {expected_features}) windows, got {x.shape}")


def encode_source(params: SourceEncoderParams, windows: Tensor,
                  training: bool = False) -> Tensor:
    _check_windows(windows, params.in_features, "source encoder")
    h = dc.relu(params.conv1(windows))
    h = dc.relu(params.conv2(h))
    z = params.proj(dc.mean_pool_time(h))
    if params.norm is not None:
        z = params.norm(z, training)
    return z


def encode_target(params: TargetEncoderParams, windows: Tensor,
                  training: bool = False) -> Tensor:
    _check_windows(windows, params.in_features, "target encoder")
    h = dc.relu(params.stem(windows))
    for block in params.blocks:
        h = block(h)
    z = params.proj(dc.mean_pool_time(h))
    if params.norm is not None:
        z = params.norm(z, training)
    return z


def classify(params: ClassifierParams, latents: Tensor) -> Tensor:
    """Attack probability per sample, shape (B,)."""
    logits = params.logits(latents)
    return dc.sigmoid(dc.rowsum(logits))


def discriminate(params: DiscriminatorParams, latents: Tensor,
                 lambda_grl: float) -> Tensor:
    """Domain probability per sample (source=0, target=1); the reversal
    sits between the latents and the head, so forward values are
    independent of lambda_grl."""
    logits = params.logits(dc.grl(latents, lambda_grl))
    return dc.sigmoid(dc.rowsum(logits))


@dataclass
class ModelParams:
    """The four parameter sets trained jointly."""

    source_encoder: SourceEncoderParams
    target_encoder: TargetEncoderParams
    classifier: ClassifierParams
    discriminator: DiscriminatorParams

    @staticmethod
    def init(rng, f_source: int, f_target: int, latent_dim: int,
             conv_channels: tuple[int, int] = (64, 128), stem_channels: int = 64,
             n_blocks: int = 2, head_hidden: int = 128, use_norm: bool = False,
             dtype=np.float32) -> "ModelParams":
        return ModelParams(
            source_encoder=SourceEncoderParams.init(
                rng, f_source, latent_dim, conv_channels, use_norm, dtype),
            target_encoder=TargetEncoderParams.init(
                rng, f_target, latent_dim, stem_channels, n_blocks, use_norm, dtype),
            classifier=HeadParams.init(rng, latent_dim, head_hidden, dtype),
            discriminator=HeadParams.init(rng, latent_dim, head_hidden, dtype),
        )

    def tensors(self) -> list[tuple[str, Tensor]]:
        return (self.source_encoder.tensors()
                + self.target_encoder.tensors()
                + self.classifier.tensors("classifier")
                + self.discriminator.tensors("discriminator"))

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return self.source_encoder.buffers() + self.target_encoder.buffers()

    def parameter_count(self) -> int:
        return sum(t.data.size for _, t in self.tensors())


def model_summary(model: ModelParams) -> str:
    """Architecture table: one line per parameter tensor plus totals."""
    lines = [f"{'tensor':<40} {'shape':<18} {'params':>10}"]
    total = 0
    for name, tensor in model.tensors():
        size = tensor.data.size
        total += size
        lines.append(f"{name:<40} {str(tuple(tensor.shape)):<18} {size:>10}")
    lines.append(f"{'total':<40} {'':<18} {total:>10}")
    return "\n".join(lines)
