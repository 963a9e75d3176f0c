"""Adversarial training loop: joint optimization of both encoders, the
label classifier, and the domain discriminator through the gradient
reversal, followed by the k-means fit that turns latents into decisions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import diffcore as dc
from . import nets
from .checkpoint import read_container, write_container
from .cluster import Centroids, kmeans_fit, map_centroids_to_classes
from .datamodel import LabelRule, RunConfig, SequenceSet
from .errors import (
    ClassExhausted,
    CorruptCheckpoint,
    DegenerateData,
    InvalidConfig,
    NotTrained,
    ShapeMismatch,
    TrainingError,
)
from .ingest import Normalizer
from .losses import (
    LossWeights,
    TripletConfig,
    bce,
    domain_objective,
    dunn_loss,
    total_adapt_loss,
    triplet_margin_loss,
)
from .triplets import TemporalWindowConfig, sample_supervised, sample_temporal

log = logging.getLogger(__name__)

LOSS_TERMS = ("total", "class", "tml_source", "tml_target", "dunn", "domain")


class Optimizer(Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    # lr 3e-4 and lambda_grl 3 keep the domain game out of BCE-clamp
    # saturation long enough for alignment to happen; at 1e-3/1.0 the
    # discriminator wins within one epoch and the reversed gradient dies
    learning_rate: float = 3e-4
    # the adversarial game stays oscillatory at constant lr: once the
    # class axes align mid-run, full-size updates can rotate them back
    # out; decaying lr late freezes the run in the basin it reached
    lr_decay_start: float = 0.5
    lr_decay_floor: float = 0.1
    optimizer: Optimizer = Optimizer.ADAM
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_momentum: float = 0.0
    lambda_grl: float = 3.0
    grl_ramp: bool = False
    weights: LossWeights = field(default_factory=LossWeights)
    margin: float = 1.0
    w_p: int = 5
    w_n: int = 100
    seed: int = 7
    # 50/50 stratified source batches leak the domain through batch class
    # mix (target batches keep the natural ~70/30), so the discriminator
    # separates domains even at perfect alignment; natural source batches
    # make the class-aligned geometry the only way to fool it
    stratify_source: bool = False
    use_norm: bool = True
    kmeans_fit_on: str = "both"  # both | source | target

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 4:
            raise InvalidConfig(f"batch_size must be >= 4, got {self.batch_size}")
        if self.learning_rate < 0:
            # 0 is legal: a zero step must leave parameters bitwise unchanged
            raise InvalidConfig(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.lambda_grl < 0:
            raise InvalidConfig(f"lambda_grl must be >= 0, got {self.lambda_grl}")
        if not 0.0 <= self.lr_decay_start <= 1.0:
            # 1.0 keeps the learning rate constant for the whole run
            raise InvalidConfig(f"lr_decay_start must be in [0, 1], "
                                f"got {self.lr_decay_start}")
        if not 0.0 < self.lr_decay_floor <= 1.0:
            raise InvalidConfig(f"lr_decay_floor must be in (0, 1], "
                                f"got {self.lr_decay_floor}")
        if self.sgd_momentum < 0:
            raise InvalidConfig(f"sgd_momentum must be >= 0, got {self.sgd_momentum}")
        if self.kmeans_fit_on not in ("both", "source", "target"):
            raise InvalidConfig(f"kmeans_fit_on must be both/source/target, "
                                f"got {self.kmeans_fit_on!r}")
        TripletConfig(margin=self.margin)
        TemporalWindowConfig(w_p=self.w_p, w_n=self.w_n)


def grl_schedule(cfg: TrainConfig, progress: float) -> float:
    """Constant lambda_grl, or the smooth 0 -> lambda_grl ramp when enabled."""
    if not cfg.grl_ramp:
        return cfg.lambda_grl
    ramp = 2.0 / (1.0 + np.exp(-10.0 * progress)) - 1.0
    return cfg.lambda_grl * float(ramp)


@dataclass
class OptState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def apply(self, named_params, cfg: TrainConfig) -> None:
        self.step += 1
        lr = cfg.learning_rate
        for name, tensor in named_params:
            g = tensor.grad
            if g is None:
                continue
            if cfg.optimizer is Optimizer.ADAM:
                m = self.m.setdefault(name, np.zeros_like(tensor.data))
                v = self.v.setdefault(name, np.zeros_like(tensor.data))
                m *= cfg.adam_beta1
                m += (1 - cfg.adam_beta1) * g
                v *= cfg.adam_beta2
                v += (1 - cfg.adam_beta2) * (g * g)
                mhat = m / (1 - cfg.adam_beta1 ** self.step)
                vhat = v / (1 - cfg.adam_beta2 ** self.step)
                tensor.data -= (lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)).astype(tensor.dtype)
            else:
                vel = self.m.setdefault(name, np.zeros_like(tensor.data))
                vel *= cfg.sgd_momentum
                vel += g
                tensor.data -= (lr * vel).astype(tensor.dtype)
            tensor.grad = None


@dataclass
class TrainState:
    model: nets.ModelParams
    opt: OptState
    epoch: int = 0
    trained: bool = False
    history: dict[str, list[float]] = field(
        default_factory=lambda: {term: [] for term in LOSS_TERMS})


@dataclass(frozen=True)
class SourceBatch:
    anchors: np.ndarray    # (B, L, F_s)
    positives: np.ndarray
    negatives: np.ndarray
    labels: np.ndarray     # (B,)


@dataclass(frozen=True)
class TargetBatch:
    anchors: np.ndarray    # (B, L, F_t)
    positives: np.ndarray  # may be shorter than anchors if anchors were
    negatives: np.ndarray  # infeasible; then triplet_rows maps them back
    triplet_rows: np.ndarray


def _zero_scalar(dtype) -> dc.Tensor:
    return dc.constant(np.zeros((), dtype=dtype))


def _encode_triple(encode, params, a: np.ndarray, p: np.ndarray, n: np.ndarray):
    stack = dc.constant(np.concatenate([a, p, n], axis=0))
    h = encode(params, stack, training=True)
    b = a.shape[0]
    return (dc.gather_rows(h, np.arange(b)),
            dc.gather_rows(h, np.arange(b, 2 * b)),
            dc.gather_rows(h, np.arange(2 * b, 3 * b)))


def train_step(state: TrainState, source_batch: SourceBatch,
               target_batch: TargetBatch, cfg: TrainConfig,
               lambda_grl: float | None = None) -> dict[str, float]:
    """One joint update. Returns the step's loss terms.

    A source batch missing one class skips the Dunn and supervised-triplet
    terms for the step (logged); classification and domain terms always run.
    """
    model = state.model
    lam = cfg.lambda_grl if lambda_grl is None else lambda_grl
    dtype = model.classifier.fc1.w.dtype

    h_sa, h_sp, h_sn = _encode_triple(nets.encode_source, model.source_encoder,
                                      source_batch.anchors, source_batch.positives,
                                      source_batch.negatives)
    h_ta, h_tp, h_tn = _encode_triple(nets.encode_target, model.target_encoder,
                                      target_batch.anchors, target_batch.positives,
                                      target_batch.negatives)

    labels = source_batch.labels
    classes, counts = np.unique(labels, return_counts=True)
    both_classes = len(classes) == 2
    dunn_ok = both_classes and counts.min() >= 2
    if not both_classes:
        log.warning("source batch is single-class; skipping Dunn and "
                    "supervised-triplet terms this step")

    if both_classes:
        l_tml_src = triplet_margin_loss(h_sa, h_sp, h_sn, cfg.margin)
    else:
        l_tml_src = _zero_scalar(dtype)

    if len(target_batch.triplet_rows):
        rows = target_batch.triplet_rows
        l_tml_tgt = triplet_margin_loss(dc.gather_rows(h_ta, rows), h_tp, h_tn,
                                        cfg.margin)
    else:
        l_tml_tgt = _zero_scalar(dtype)

    l_class = bce(nets.classify(model.classifier, h_sa), labels.astype(dtype))
    l_dunn = dunn_loss(h_sa, labels) if dunn_ok else _zero_scalar(dtype)

    h_both = dc.concat_rows([h_sa, h_ta])
    domain_targets = np.concatenate([
        np.zeros(source_batch.anchors.shape[0], dtype=dtype),
        np.ones(target_batch.anchors.shape[0], dtype=dtype),
    ])
    l_domain = bce(nets.discriminate(model.discriminator, h_both, lam),
                   domain_targets)

    l_tml = dc.add(l_tml_src, l_tml_tgt)
    total = dc.add(total_adapt_loss(l_dunn, l_tml, l_class, cfg.weights),
                   domain_objective(l_domain, cfg.weights))
    dc.backward(total)
    state.opt.apply(model.tensors(), cfg)
    return {
        "total": total.item(),
        "class": l_class.item(),
        "tml_source": l_tml_src.item(),
        "tml_target": l_tml_tgt.item(),
        "dunn": l_dunn.item(),
        "domain": l_domain.item(),
    }


def encode_set(model: nets.ModelParams, sequences: SequenceSet,
               batch_size: int = 1024) -> np.ndarray:
    """Eval-mode latents for a whole SequenceSet, using the encoder that
    matches the set's domain tag."""
    from .datamodel import DomainTag

    if sequences.domain_tag is DomainTag.SOURCE:
        encode, params = nets.encode_source, model.source_encoder
    else:
        encode, params = nets.encode_target, model.target_encoder
    out = np.empty((len(sequences), params.latent_dim), dtype=np.float32)
    for lo in range(0, len(sequences), batch_size):
        idx = np.arange(lo, min(lo + batch_size, len(sequences)))
        h = encode(params, dc.constant(sequences.windows(idx)), training=False)
        out[lo:lo + len(idx)] = h.data.astype(np.float32)
    return out


class _Cycler:
    """Reshuffling index stream: hands out fixed-size batches forever,
    reshuffling whenever the pool is exhausted."""

    def __init__(self, pool: np.ndarray, rng: np.random.Generator):
        self.pool = np.asarray(pool)
        self.rng = rng
        self.order = rng.permutation(self.pool)
        self.cursor = 0

    def take(self, size: int) -> np.ndarray:
        out = []
        while size > 0:
            if self.cursor >= len(self.order):
                self.order = self.rng.permutation(self.pool)
                self.cursor = 0
            grab = min(size, len(self.order) - self.cursor)
            out.append(self.order[self.cursor:self.cursor + grab])
            self.cursor += grab
            size -= grab
        return np.concatenate(out)


def _source_anchor_stream(labels: np.ndarray, cfg: TrainConfig,
                          rng: np.random.Generator):
    if cfg.stratify_source:
        benign = np.flatnonzero(labels == 0)
        attack = np.flatnonzero(labels == 1)
        if len(benign) == 0 or len(attack) == 0:
            raise ClassExhausted("source training data must contain both classes")
        half = cfg.batch_size // 2
        c0, c1 = _Cycler(benign, rng), _Cycler(attack, rng)

        def draw():
            merged = np.concatenate([c0.take(half), c1.take(cfg.batch_size - half)])
            return rng.permutation(merged)

        batches_per_epoch = max(min(len(benign), len(attack)) // half, 0)
    else:
        cycler = _Cycler(np.arange(len(labels)), rng)
        draw = lambda: cycler.take(cfg.batch_size)
        batches_per_epoch = len(labels) // cfg.batch_size
    return draw, batches_per_epoch


@dataclass
class FitResult:
    state: TrainState
    centroids: Centroids | None
    history: dict[str, list[float]]


def _gather_triplets(sequences: SequenceSet, triplets) -> tuple[np.ndarray, np.ndarray]:
    p = sequences.windows(np.array([t.positive_idx for t in triplets], dtype=np.int64))
    n = sequences.windows(np.array([t.negative_idx for t in triplets], dtype=np.int64))
    return p, n


def fit(source: SequenceSet, target: SequenceSet, run_cfg: RunConfig,
        cfg: TrainConfig, log_cb=None) -> FitResult:
    """Full training pass over both domains, then the latent k-means fit
    and centroid-to-class mapping.

    log_cb, when given, receives one dict per epoch with the mean loss
    terms (the CLI streams these as JSON lines). epochs=0 returns the
    initialized state with no centroids, marked untrained.
    """
    if source.labels is None:
        raise ClassExhausted("source sequences carry no labels")
    if source.length != target.length:
        raise ShapeMismatch(
            f"both domains need equal sequence length, got {source.length} "
            f"vs {target.length}")

    rng = np.random.default_rng(cfg.seed)
    model = nets.ModelParams.init(rng, source.n_features, target.n_features,
                                  run_cfg.latent_dim, use_norm=cfg.use_norm)
    state = TrainState(model=model, opt=OptState())

    if cfg.epochs == 0:
        return FitResult(state=state, centroids=None, history=state.history)

    labels = np.asarray(source.labels)
    draw_source, n_src_batches = _source_anchor_stream(labels, cfg, rng)
    n_tgt_batches = len(target) // cfg.batch_size
    steps_per_epoch = min(n_src_batches, n_tgt_batches)
    if steps_per_epoch < 1:
        raise DegenerateData(
            f"not enough sequences for one batch pair: {n_src_batches} source / "
            f"{n_tgt_batches} target batches of size {cfg.batch_size}")

    tw = TemporalWindowConfig(w_p=cfg.w_p, w_n=cfg.w_n)
    target_cycler = _Cycler(np.arange(len(target)), rng)
    total_steps = cfg.epochs * steps_per_epoch
    global_step = 0

    for epoch in range(cfg.epochs):
        sums = {term: 0.0 for term in LOSS_TERMS}
        for _ in range(steps_per_epoch):
            anchors_s = draw_source()
            trip_s = sample_supervised(labels, anchors_s, rng)
            sp, sn = _gather_triplets(source, trip_s)
            src_batch = SourceBatch(anchors=source.windows(anchors_s),
                                    positives=sp, negatives=sn,
                                    labels=labels[anchors_s])

            anchors_t = target_cycler.take(cfg.batch_size)
            trip_t = sample_temporal(len(target), tw, anchors_t, rng,
                                     skip_infeasible=True)
            tp, tn = _gather_triplets(target, trip_t)
            anchor_pos = {int(a): i for i, a in enumerate(anchors_t)}
            rows = np.array([anchor_pos[t.anchor_idx] for t in trip_t],
                            dtype=np.int64)
            tgt_batch = TargetBatch(anchors=target.windows(anchors_t),
                                    positives=tp, negatives=tn,
                                    triplet_rows=rows)

            lam = grl_schedule(cfg, global_step / max(total_steps - 1, 1))
            step_losses = train_step(state, src_batch, tgt_batch, cfg, lam)
            for term in LOSS_TERMS:
                sums[term] += step_losses[term]
            global_step += 1

        record = {term: sums[term] / steps_per_epoch for term in LOSS_TERMS}
        if not all(np.isfinite(v) for v in record.values()):
            raise TrainingError(
                f"non-finite loss at epoch {epoch}: {record} (divergence)")
        state.epoch = epoch + 1
        for term in LOSS_TERMS:
            state.history[term].append(record[term])
        if log_cb is not None:
            log_cb({"epoch": epoch, **record})

    state.trained = True
    h_source = encode_set(model, source)
    h_target = encode_set(model, target)
    if cfg.kmeans_fit_on == "source":
        points = h_source
    elif cfg.kmeans_fit_on == "target":
        points = h_target
    else:
        points = np.concatenate([h_source, h_target], axis=0)
    centroids = kmeans_fit(points, seed=cfg.seed)
    centroids = map_centroids_to_classes(centroids, h_source, labels)
    return FitResult(state=state, centroids=centroids, history=state.history)


# --- persistence ---

FORMAT_VERSION = 1


def _run_cfg_to_meta(run_cfg: RunConfig) -> dict:
    return {
        "sequence_length": run_cfg.sequence_length,
        "stride": run_cfg.stride,
        "latent_dim": run_cfg.latent_dim,
        "seed": run_cfg.seed,
        "label_rule": run_cfg.label_rule.value,
    }


def _run_cfg_from_meta(meta: dict) -> RunConfig:
    return RunConfig(sequence_length=int(meta["sequence_length"]),
                     stride=int(meta["stride"]),
                     latent_dim=int(meta["latent_dim"]),
                     seed=int(meta["seed"]),
                     label_rule=LabelRule(meta["label_rule"]))


def _norm_to_meta(norm: Normalizer) -> dict:
    return {"mean": norm.mean.tolist(), "std": norm.std.tolist(),
            "epsilon": norm.epsilon}


def _norm_from_meta(meta: dict) -> Normalizer:
    return Normalizer(mean=np.asarray(meta["mean"], dtype=np.float64),
                      std=np.asarray(meta["std"], dtype=np.float64),
                      epsilon=float(meta["epsilon"]))


def save_checkpoint(state: TrainState, centroids: Centroids | None,
                    path, run_cfg: RunConfig, cfg: TrainConfig,
                    normalizers: dict[str, Normalizer] | None = None) -> None:
    model = state.model
    meta = {
        "format_version": FORMAT_VERSION,
        "run": _run_cfg_to_meta(run_cfg),
        "train": {
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate,
            "optimizer": cfg.optimizer.value,
            "lambda_grl": cfg.lambda_grl,
            "grl_ramp": cfg.grl_ramp,
            "weights": {
                "lambda_dunn": cfg.weights.lambda_dunn,
                "lambda_tml": cfg.weights.lambda_tml,
                "lambda_class": cfg.weights.lambda_class,
                "lambda_domain": cfg.weights.lambda_domain,
            },
            "margin": cfg.margin,
            "w_p": cfg.w_p,
            "w_n": cfg.w_n,
            "seed": cfg.seed,
            "stratify_source": cfg.stratify_source,
            "use_norm": cfg.use_norm,
            "kmeans_fit_on": cfg.kmeans_fit_on,
        },
        "f_source": model.source_encoder.in_features,
        "f_target": model.target_encoder.in_features,
        "trained": state.trained,
        "epoch": state.epoch,
        "history": state.history,
        "centroid_classes": list(centroids.class_of) if centroids is not None
                            and centroids.class_of is not None else None,
        "normalizers": ({k: _norm_to_meta(v) for k, v in normalizers.items()}
                        if normalizers else None),
    }
    tensors = [(name, t.data) for name, t in model.tensors()]
    tensors += [(name, buf) for name, buf in model.buffers()]
    if centroids is not None:
        tensors.append(("centroids.mu", centroids.mu))
    write_container(path, meta, tensors)


@dataclass
class CheckpointBundle:
    model: nets.ModelParams
    centroids: Centroids | None
    run_cfg: RunConfig
    train_meta: dict
    normalizers: dict[str, Normalizer]
    trained: bool
    history: dict[str, list[float]]


def load_checkpoint(path, expect_run_cfg: RunConfig | None = None) -> CheckpointBundle:
    """Rebuild the model from a container; declared shapes are validated
    against the reconstructed architecture, and an expected run config may
    be supplied to reject checkpoints trained at other dimensions."""
    meta, tensors = read_container(path)
    try:
        run_meta = meta["run"]
        run_cfg = _run_cfg_from_meta(run_meta)
        f_source = int(meta["f_source"])
        f_target = int(meta["f_target"])
        use_norm = bool(meta["train"].get("use_norm", False))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: incomplete config echo: {exc}") from None
    if expect_run_cfg is not None:
        for attr in ("latent_dim", "sequence_length"):
            want = getattr(expect_run_cfg, attr)
            got = getattr(run_cfg, attr)
            if want != got:
                raise CorruptCheckpoint(
                    f"{path}: checkpoint {attr} {got} does not match the "
                    f"configured {attr} {want} (dimension mismatch)")
    model = nets.ModelParams.init(np.random.default_rng(0), f_source, f_target,
                                  run_cfg.latent_dim, use_norm=use_norm)
    for name, tensor in model.tensors():
        if name not in tensors:
            raise CorruptCheckpoint(f"{path}: missing tensor {name!r}")
        loaded = tensors[name]
        if loaded.shape != tensor.data.shape:
            raise CorruptCheckpoint(
                f"{path}: tensor {name!r} has shape {loaded.shape}, expected "
                f"{tensor.data.shape} (dimension mismatch)")
        tensor.data = loaded
    for name, buf in model.buffers():
        if name not in tensors:
            raise CorruptCheckpoint(f"{path}: missing buffer {name!r}")
        buf[...] = tensors[name]
    centroids = None
    if "centroids.mu" in tensors:
        classes = meta.get("centroid_classes")
        centroids = Centroids(mu=tensors["centroids.mu"],
                              class_of=tuple(classes) if classes else None)
    normalizers = {k: _norm_from_meta(v)
                   for k, v in (meta.get("normalizers") or {}).items()}
    return CheckpointBundle(model=model, centroids=centroids, run_cfg=run_cfg,
                            train_meta=meta.get("train", {}),
                            normalizers=normalizers,
                            trained=bool(meta.get("trained", False)),
                            history=meta.get("history", {}))


def require_trained(bundle: CheckpointBundle) -> None:
    if not bundle.trained or bundle.centroids is None:
        raise NotTrained("checkpoint holds an untrained model (epochs=0 run)")
