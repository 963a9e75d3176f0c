"""Core domain types and the flow-to-sequence transformation.

A FlowTable is a per-flow feature matrix for one domain (rows in timestamp
order). Sequencing turns it into overlapping length-L windows that the
encoders consume as multivariate time-series samples. Latent batches are
plain (B, latent_dim) float arrays throughout the package; there is no
per-vector wrapper type.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidStride,
    LabelDomain,
    TableTooShort,
    ValidationError,
)


class DomainTag(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


class LabelRule(enum.Enum):
    """How a window's label is derived from its constituent flow labels."""

    LAST_FLOW = "last_flow"
    MAJORITY = "majority"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FlowTable:
    """Raw per-flow feature matrix with optional labels and timestamps.

    Rows are flows in temporal order. Arrays are frozen at construction so
    tables are safe to share across concurrent readers. `boundaries` lists
    row indices at which a new session starts; windows never span one.
    """

    features: np.ndarray
    domain_tag: DomainTag
    feature_names: tuple[str, ...]
    labels: np.ndarray | None = None
    timestamps: np.ndarray | None = None
    boundaries: tuple[int, ...] = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {feats.shape}")
        if len(self.feature_names) != feats.shape[1]:
            raise ValidationError(
                f"{len(self.feature_names)} feature names for {feats.shape[1]} columns"
            )
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (feats.shape[0],):
                raise ValidationError(
                    f"labels length {labels.shape} does not match {feats.shape[0]} rows"
                )
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.float64)
            if ts.shape != (feats.shape[0],):
                raise ValidationError(
                    f"timestamps length {ts.shape} does not match {feats.shape[0]} rows"
                )
            object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "boundaries", tuple(int(b) for b in self.boundaries))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def validate_flow_table(table: FlowTable) -> FlowTable:
    """Full-scan validation: finite features, monotone timestamps, binary labels.

    Returns the same table on success; raises ValidationError carrying the
    first offending row/column otherwise.
    """
    bad = ~np.isfinite(table.features)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValidationError(
            f"non-finite feature value at row {row}, column {col} "
            f"({table.feature_names[col]!r})",
            row=int(row),
            column=int(col),
        )
    if table.labels is not None:
        outside = (table.labels != 0) & (table.labels != 1)
        if outside.any():
            row = int(np.argmax(outside))
            raise LabelDomain(
                f"label {table.labels[row]} at row {row} is outside {{0, 1}}"
            )
    if table.timestamps is not None:
        diffs = np.diff(table.timestamps)
        if (diffs < 0).any():
            row = int(np.argmax(diffs < 0)) + 1
            raise ValidationError(
                f"timestamps decrease at row {row}", row=row, column=None
            )
    return table


@dataclass(frozen=True)
class RunConfig:
    """Run-level knobs shared by sequencing, model building, and training."""

    sequence_length: int = 25
    stride: int = 1
    latent_dim: int = 512
    seed: int = 7
    label_rule: LabelRule = LabelRule.LAST_FLOW

    def __post_init__(self):
        if self.sequence_length < 1:
            raise InvalidStride(f"sequence_length must be >= 1, got {self.sequence_length}")
        if self.stride < 1:
            raise InvalidStride(f"stride must be >= 1, got {self.stride}")
        if self.latent_dim < 2:
            raise InvalidStride(f"latent_dim must be >= 2, got {self.latent_dim}")


@dataclass(frozen=True)
class SequenceSample:
    """One length-L window of consecutive flows."""

    window: np.ndarray
    start_index: int
    label: int | None = None


class SequenceSet:
    """Ordered collection of windows over one FlowTable.

    Windows are materialized lazily from the table (overlapping windows
    would otherwise multiply memory by L at stride 1). Indexing yields
    SequenceSample; `windows(idx)` gathers a batch as one (B, L, F) array.
    Immutable after construction.
    """

    def __init__(self, table: FlowTable, starts: np.ndarray, length: int,
                 labels: np.ndarray | None):
        self._features = table.features
        self.domain_tag = table.domain_tag
        self.starts = _frozen(np.asarray(starts, dtype=np.int64))
        self.length = int(length)
        self.labels = None if labels is None else _frozen(np.asarray(labels, dtype=np.int64))

    @property
    def n_features(self) -> int:
        return self._features.shape[1]

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i: int) -> SequenceSample:
        s = int(self.starts[i])
        return SequenceSample(
            window=self._features[s:s + self.length],
            start_index=s,
            label=None if self.labels is None else int(self.labels[i]),
        )

    def windows(self, idx) -> np.ndarray:
        """Gather windows for the given sequence indices as (B, L, F) float32."""
        starts = self.starts[np.asarray(idx, dtype=np.int64)]
        offsets = starts[:, None] + np.arange(self.length)[None, :]
        return self._features[offsets].astype(np.float32)

    def subset(self, idx) -> "SequenceSet":
        """New SequenceSet restricted to the given sequence indices (in order)."""
        idx = np.asarray(idx, dtype=np.int64)
        out = SequenceSet.__new__(SequenceSet)
        out._features = self._features
        out.domain_tag = self.domain_tag
        out.starts = _frozen(self.starts[idx])
        out.length = self.length
        out.labels = None if self.labels is None else _frozen(self.labels[idx])
        return out


def _window_label(labels: np.ndarray, rule: LabelRule) -> int:
    if rule is LabelRule.LAST_FLOW:
        return int(labels[-1])
    return int(labels.mean() >= 0.5)


def make_sequences(table: FlowTable, sequence_length: int, stride: int = 1,
                   label_rule: LabelRule = LabelRule.LAST_FLOW) -> SequenceSet:
    """Window a validated FlowTable into length-L sequences.

    Emits floor((N - L) / stride) + 1 windows in temporal order per
    contiguous segment (session boundaries restart the windowing). Window
    labels follow `label_rule`; unlabeled tables yield unlabeled sequences.
    """
    if stride < 1:
        raise InvalidStride(f"stride must be >= 1, got {stride}")
    if sequence_length < 1:
        raise InvalidStride(f"sequence_length must be >= 1, got {sequence_length}")
    n = table.n_rows
    if n < sequence_length:
        raise TableTooShort(
            f"table has {n} rows, need at least {sequence_length}"
        )
    edges = sorted(set(b for b in table.boundaries if 0 < b < n))
    segment_bounds = list(zip([0] + edges, edges + [n]))

    starts = []
    for lo, hi in segment_bounds:
        seg_len = hi - lo
        if seg_len < sequence_length:
            continue
        count = (seg_len - sequence_length) // stride + 1
        starts.extend(lo + stride * np.arange(count))
    if not starts:
        raise TableTooShort(
            f"no segment of length >= {sequence_length} between session boundaries"
        )
    starts = np.asarray(starts, dtype=np.int64)

    labels = None
    if table.labels is not None:
        labels = np.array(
            [_window_label(table.labels[s:s + sequence_length], label_rule) for s in starts],
            dtype=np.int64,
        )
    return SequenceSet(table, starts, sequence_length, labels)
