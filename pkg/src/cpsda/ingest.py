"""Dataset loading, normalization, splitting, and synthetic two-domain data.

CSV loading is schema-driven: a DatasetSchema names the feature columns,
the optional label/timestamp columns, and which label strings count as
attacks. Presets for the supported public datasets ship as editable flat
key=value files under cpsda/presets/.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import DomainTag, FlowTable, SequenceSet, validate_flow_table
from .errors import (
    DegenerateSplit,
    DimensionMismatch,
    EmptyFile,
    EmptyTable,
    InvalidConfig,
    MissingColumn,
    ParseError,
)

AUTO_FEATURES = "auto"


@dataclass(frozen=True)
class DatasetSchema:
    """Declarative description of one dataset's CSV layout.

    feature_columns may be the literal string "auto", meaning every column
    that is not the label or timestamp column; useful for files that already
    contain exactly the intended feature set.
    """

    feature_columns: tuple[str, ...] | str
    label_column: str | None = None
    timestamp_column: str | None = None
    positive_label_values: frozenset[str] = frozenset({"1"})

    def __post_init__(self):
        if self.feature_columns == AUTO_FEATURES:
            return
        cols = tuple(self.feature_columns)
        if not cols:
            raise InvalidConfig("feature_columns must be non-empty")
        if len(set(cols)) != len(cols):
            dupes = sorted({c for c in cols if cols.count(c) > 1})
            raise InvalidConfig(f"duplicate feature columns: {dupes}")
        for special in (self.label_column, self.timestamp_column):
            if special is not None and special in cols:
                raise InvalidConfig(
                    f"column {special!r} cannot be both a feature and label/timestamp"
                )
        object.__setattr__(self, "feature_columns", cols)
        object.__setattr__(
            self, "positive_label_values", frozenset(self.positive_label_values)
        )


def load_schema_preset(path: str | Path) -> DatasetSchema:
    """Read a schema from a flat key=value preset file.

    Recognized keys: feature_columns (comma-separated names or "auto"),
    label_column, timestamp_column, positive_label_values (comma-separated).
    """
    path = Path(path)
    known = {"feature_columns", "label_column", "timestamp_column", "positive_label_values"}
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise InvalidConfig(f"{path}:{lineno}: unknown schema key {key!r}")
        values[key] = value.strip()
    if "feature_columns" not in values:
        raise InvalidConfig(f"{path}: missing feature_columns")
    features = values["feature_columns"]
    if features != AUTO_FEATURES:
        features = tuple(c.strip() for c in features.split(",") if c.strip())
    positives = frozenset(
        v.strip() for v in values.get("positive_label_values", "1").split(",") if v.strip()
    )
    return DatasetSchema(
        feature_columns=features,
        label_column=values.get("label_column") or None,
        timestamp_column=values.get("timestamp_column") or None,
        positive_label_values=positives,
    )


def preset_path(name: str) -> Path:
    """Path of a bundled schema preset ("wustl2021" or "rospace_lightweight")."""
    return Path(__file__).parent / "presets" / f"{name}.schema"


def _parse_float_column(cells: list[str], col_name: str, col_pos: int) -> np.ndarray:
    try:
        return np.asarray(cells, dtype=np.float64)
    except ValueError:
        for row, cell in enumerate(cells):
            try:
                float(cell)
            except ValueError:
                raise ParseError(
                    f"cannot parse {cell!r} as a number at data row {row}, "
                    f"column {col_name!r}",
                    row=row,
                    column=col_pos,
                ) from None
        raise


def load_csv(path: str | Path, schema: DatasetSchema, domain_tag: DomainTag) -> FlowTable:
    """Load one domain's flow CSV into a validated FlowTable.

    Rows are reordered by timestamp (stable sort) when the schema names a
    timestamp column, otherwise kept in file order. Label cells matching
    positive_label_values map to 1, everything else to 0.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} has no header row") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyFile(f"{path} has a header but no data rows")

    if schema.feature_columns == AUTO_FEATURES:
        skip = {schema.label_column, schema.timestamp_column}
        feature_names = tuple(h for h in header if h not in skip)
    else:
        feature_names = schema.feature_columns

    positions = {name: i for i, name in enumerate(header)}
    required = list(feature_names)
    for special in (schema.label_column, schema.timestamp_column):
        if special is not None:
            required.append(special)
    missing = [c for c in required if c not in positions]
    if missing:
        raise MissingColumn(f"{path} is missing columns {missing}")

    n = len(rows)
    width = len(header)
    short = [i for i, row in enumerate(rows) if len(row) < width]
    if short:
        raise ParseError(
            f"data row {short[0]} has {len(rows[short[0]])} cells, expected {width}",
            row=short[0],
        )

    features = np.empty((n, len(feature_names)), dtype=np.float64)
    for j, name in enumerate(feature_names):
        pos = positions[name]
        features[:, j] = _parse_float_column([row[pos] for row in rows], name, pos)

    labels = None
    if schema.label_column is not None:
        pos = positions[schema.label_column]
        positives = schema.positive_label_values
        labels = np.fromiter(
            (1 if row[pos].strip() in positives else 0 for row in rows),
            dtype=np.int64,
            count=n,
        )

    timestamps = None
    if schema.timestamp_column is not None:
        pos = positions[schema.timestamp_column]
        timestamps = _parse_float_column(
            [row[pos] for row in rows], schema.timestamp_column, pos
        )
        order = np.argsort(timestamps, kind="stable")
        features = features[order]
        timestamps = timestamps[order]
        if labels is not None:
            labels = labels[order]

    table = FlowTable(
        features=features,
        domain_tag=domain_tag,
        feature_names=feature_names,
        labels=labels,
        timestamps=timestamps,
    )
    return validate_flow_table(table)


@dataclass(frozen=True)
class Normalizer:
    """Per-feature z-score parameters (population statistics).

    Features whose std falls below epsilon keep an effective divisor of 1
    so constant columns normalize to zero instead of exploding.
    """

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = 1e-8

    @property
    def effective_std(self) -> np.ndarray:
        return np.where(self.std < self.epsilon, 1.0, self.std)

    def invert(self, features: np.ndarray) -> np.ndarray:
        return features * self.effective_std + self.mean


def fit_normalizer(table: FlowTable, epsilon: float = 1e-8) -> Normalizer:
    if table.n_rows == 0:
        raise EmptyTable("cannot fit a normalizer on an empty table")
    mean = table.features.mean(axis=0)
    std = table.features.std(axis=0)
    return Normalizer(mean=mean, std=std, epsilon=epsilon)


def apply_normalizer(norm: Normalizer, table: FlowTable) -> FlowTable:
    if norm.mean.shape[0] != table.n_features:
        raise DimensionMismatch(
            f"normalizer has {norm.mean.shape[0]} features, table has {table.n_features}"
        )
    scaled = (table.features - norm.mean) / norm.effective_std
    return FlowTable(
        features=scaled,
        domain_tag=table.domain_tag,
        feature_names=table.feature_names,
        labels=table.labels,
        timestamps=table.timestamps,
        boundaries=table.boundaries,
    )


def split(sequences: SequenceSet, train_fraction: float, seed: int = 0,
          mode: str = "temporal", purge: bool = False) -> tuple[SequenceSet, SequenceSet]:
    """Partition a SequenceSet into train/test.

    Temporal mode (default) takes the first floor(n * fraction) windows by
    start_index as train. With purge=True, train windows whose rows overlap
    the first test window are dropped, so no test window starts before any
    train window's start_index + L.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfig(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(sequences)
    k = int(n * train_fraction)
    if mode == "temporal":
        train_idx = np.arange(k)
        test_idx = np.arange(k, n)
        if purge and k < n:
            first_test_start = sequences.starts[k]
            keep = sequences.starts[:k] + sequences.length <= first_test_start
            train_idx = train_idx[keep]
    elif mode == "random":
        perm = np.random.default_rng(seed).permutation(n)
        train_idx = np.sort(perm[:k])
        test_idx = np.sort(perm[k:])
    else:
        raise InvalidConfig(f"unknown split mode {mode!r}")
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise DegenerateSplit(
            f"split of {n} sequences at fraction {train_fraction} left one side empty"
        )
    return sequences.subset(train_idx), sequences.subset(test_idx)


# --- synthetic two-domain generator ---

_LATENT_PROCESS_DIM = 8


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic two-domain generator.

    Attack rows arrive in contiguous bursts (geometric lengths around
    burst_length_mean) so that temporal proximity correlates with class,
    which is what the unsupervised triplet sampler relies on.
    """

    source_dim: int = 23
    target_dim: int = 60
    n_source: int = 20000
    n_target: int = 20000
    attack_fraction: float = 0.3
    burst_length_mean: float = 60.0
    latent_separation: float = 8.0
    noise_std: float = 0.5
    seed: int = 7

    def __post_init__(self):
        if self.source_dim < 2 or self.target_dim < 2:
            raise InvalidConfig("feature dims must be >= 2")
        if not 0.0 < self.attack_fraction < 1.0:
            raise InvalidConfig(
                f"attack_fraction must be in (0, 1), got {self.attack_fraction}"
            )
        if self.n_source < 1 or self.n_target < 1:
            raise InvalidConfig("row counts must be >= 1")
        if self.burst_length_mean < 1.0:
            raise InvalidConfig("burst_length_mean must be >= 1")
        if self.noise_std < 0.0:
            raise InvalidConfig("noise_std must be >= 0")


@dataclass(frozen=True)
class SynthResult:
    source: FlowTable
    target: FlowTable
    target_labels: np.ndarray  # sidecar only; never exposed via the target table


def _burst_labels(rng: np.random.Generator, n: int, attack_fraction: float,
                  burst_mean: float) -> np.ndarray:
    """Alternating benign/attack runs with geometric lengths."""
    mean_attack = max(burst_mean, 1.0)
    mean_benign = max(mean_attack * (1.0 - attack_fraction) / attack_fraction, 1.0)
    labels = np.empty(n, dtype=np.int64)
    i = 0
    state = 0
    while i < n:
        mean = mean_attack if state == 1 else mean_benign
        run = int(rng.geometric(1.0 / mean))
        labels[i:i + run] = state
        i += run
        state = 1 - state
    return labels


def _lift(rng: np.random.Generator, z: np.ndarray, out_dim: int,
          noise_std: float, shift: bool) -> np.ndarray:
    k = z.shape[1]
    mixing = rng.normal(size=(k, out_dim)) / np.sqrt(k)
    offset = rng.normal(size=out_dim) if shift else np.zeros(out_dim)
    x = z @ mixing + offset
    if noise_std > 0:
        x = x + noise_std * rng.normal(size=x.shape)
    return x


def synth_generate(cfg: SynthConfig) -> SynthResult:
    """Draw a shared two-class latent process and lift it into both domains.

    Both domains sample the same pair of latent Gaussian blobs (centers
    `latent_separation` apart) but are observed through different fixed
    random linear lifts; the target additionally gets a fixed affine shift.
    The source table carries labels; the target's labels are returned only
    in the sidecar array.
    """
    rng = np.random.default_rng(cfg.seed)
    k = _LATENT_PROCESS_DIM
    center_attack = (cfg.latent_separation / np.sqrt(k)) * np.ones(k)

    def domain_rows(n: int) -> tuple[np.ndarray, np.ndarray]:
        labels = _burst_labels(rng, n, cfg.attack_fraction, cfg.burst_length_mean)
        z = rng.normal(size=(n, k))
        z[labels == 1] += center_attack
        return labels, z

    source_labels, z_s = domain_rows(cfg.n_source)
    target_labels, z_t = domain_rows(cfg.n_target)
    x_s = _lift(rng, z_s, cfg.source_dim, cfg.noise_std, shift=False)
    x_t = _lift(rng, z_t, cfg.target_dim, cfg.noise_std, shift=True)

    names_s = tuple(f"f{j:02d}" for j in range(cfg.source_dim))
    names_t = tuple(f"g{j:02d}" for j in range(cfg.target_dim))
    source = FlowTable(
        features=x_s,
        domain_tag=DomainTag.SOURCE,
        feature_names=names_s,
        labels=source_labels,
        timestamps=np.arange(cfg.n_source, dtype=np.float64),
    )
    target = FlowTable(
        features=x_t,
        domain_tag=DomainTag.TARGET,
        feature_names=names_t,
        labels=None,
        timestamps=np.arange(cfg.n_target, dtype=np.float64),
    )
    return SynthResult(source=source, target=target, target_labels=target_labels)


def write_table_csv(table: FlowTable, path: str | Path,
                    label_column: str | None = "label",
                    timestamp_column: str | None = "time") -> None:
    """Write a FlowTable back out as CSV (used by synth and preprocess)."""
    path = Path(path)
    header: list[str] = []
    if timestamp_column and table.timestamps is not None:
        header.append(timestamp_column)
    header.extend(table.feature_names)
    if label_column and table.labels is not None:
        header.append(label_column)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(table.n_rows):
            row: list[str] = []
            if timestamp_column and table.timestamps is not None:
                row.append(repr(float(table.timestamps[i])))
            row.extend(repr(float(v)) for v in table.features[i])
            if label_column and table.labels is not None:
                row.append(str(int(table.labels[i])))
            writer.writerow(row)


def write_label_sidecar(labels: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"])
        for v in labels:
            writer.writerow([int(v)])


def read_label_sidecar(path: str | Path) -> np.ndarray:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} has no header row") from None
        if header != ["label"]:
            raise ParseError(f"{path}: expected a single 'label' column, got {header}")
        values = [row[0] for row in reader if row]
    if not values:
        raise EmptyFile(f"{path} has no label rows")
    try:
        return np.asarray(values, dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"{path}: non-integer label: {exc}") from None
