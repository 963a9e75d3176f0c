"""Flat [section] key=value run configuration.

Every key must belong to a known section (typo guard); every parse or
conversion problem is reported as a diagnostic carrying file and line.
Command-line flags override file values, which override defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .datamodel import LabelRule, RunConfig
from .errors import InvalidConfig
from .ingest import SynthConfig
from .losses import LossWeights
from .train import Optimizer, TrainConfig


@dataclass(frozen=True)
class DataConfig:
    """Where the two domains' CSVs live and how to split them.

    Schema values may be a bundled preset name (wustl2021,
    rospace_lightweight, synth_source, synth_target) or a path to a
    .schema file.
    """

    source_csv: str = "source.csv"
    target_csv: str = "target.csv"
    source_schema: str = "synth_source"
    target_schema: str = "synth_target"
    target_labels_csv: str = ""
    train_fraction: float = 0.8
    split_mode: str = "temporal"
    purge_overlap: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig(
                f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.split_mode not in ("temporal", "random"):
            raise InvalidConfig(
                f"split_mode must be temporal or random, got {self.split_mode!r}")


@dataclass(frozen=True)
class EvalConfig:
    checkpoint: str = "model.ckpt"
    results_file: str = ""
    domains: tuple[str, ...] = ("source", "target")
    figures: bool = True

    def __post_init__(self):
        bad = [d for d in self.domains if d not in ("source", "target")]
        if bad:
            raise InvalidConfig(f"unknown eval domains {bad}")


@dataclass(frozen=True)
class CliConfig:
    run: RunConfig = field(default_factory=RunConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _to_int(raw: str) -> int:
    return int(raw, 10)


def _to_float(raw: str) -> float:
    return float(raw)


def _to_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_str(raw: str) -> str:
    return raw


def _to_label_rule(raw: str) -> LabelRule:
    return LabelRule(raw.lower())


def _to_optimizer(raw: str) -> Optimizer:
    return Optimizer(raw.lower())


def _to_domains(raw: str) -> tuple[str, ...]:
    return tuple(d.strip() for d in raw.split(",") if d.strip())


_SECTIONS: dict[str, dict[str, tuple]] = {
    "run": {
        "sequence_length": (_to_int,),
        "stride": (_to_int,),
        "latent_dim": (_to_int,),
        "seed": (_to_int,),
        "label_rule": (_to_label_rule,),
    },
    "data": {
        "source_csv": (_to_str,),
        "target_csv": (_to_str,),
        "source_schema": (_to_str,),
        "target_schema": (_to_str,),
        "target_labels_csv": (_to_str,),
        "train_fraction": (_to_float,),
        "split_mode": (_to_str,),
        "purge_overlap": (_to_bool,),
    },
    "synth": {
        "source_dim": (_to_int,),
        "target_dim": (_to_int,),
        "n_source": (_to_int,),
        "n_target": (_to_int,),
        "attack_fraction": (_to_float,),
        "burst_length_mean": (_to_float,),
        "latent_separation": (_to_float,),
        "noise_std": (_to_float,),
        "seed": (_to_int,),
    },
    "train": {
        "epochs": (_to_int,),
        "batch_size": (_to_int,),
        "learning_rate": (_to_float,),
        "optimizer": (_to_optimizer,),
        "adam_beta1": (_to_float,),
        "adam_beta2": (_to_float,),
        "adam_eps": (_to_float,),
        "sgd_momentum": (_to_float,),
        "lambda_grl": (_to_float,),
        "grl_ramp": (_to_bool,),
        "lambda_dunn": (_to_float,),
        "lambda_tml": (_to_float,),
        "lambda_class": (_to_float,),
        "lambda_domain": (_to_float,),
        "margin": (_to_float,),
        "w_p": (_to_int,),
        "w_n": (_to_int,),
        "seed": (_to_int,),
        "stratify_source": (_to_bool,),
        "use_norm": (_to_bool,),
        "kmeans_fit_on": (_to_str,),
    },
    "eval": {
        "checkpoint": (_to_str,),
        "results_file": (_to_str,),
        "domains": (_to_domains,),
        "figures": (_to_bool,),
    },
}

_WEIGHT_KEYS = ("lambda_dunn", "lambda_tml", "lambda_class", "lambda_domain")


def parse_sections(path: str | Path) -> dict[str, dict[str, str]]:
    """Raw [section] key=value parse with diagnostics; values stay strings."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise InvalidConfig(
                    f"{path}:{lineno}: unknown section [{current}]; known: "
                    f"{sorted(_SECTIONS)}")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise InvalidConfig(
                f"{path}:{lineno}: expected key = value or [section], got {line!r}")
        if current is None:
            raise InvalidConfig(
                f"{path}:{lineno}: key before any [section] header")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _SECTIONS[current]:
            raise InvalidConfig(
                f"{path}:{lineno}: unknown key {key!r} in [{current}]; known: "
                f"{sorted(_SECTIONS[current])}")
        if key in sections[current]:
            raise InvalidConfig(
                f"{path}:{lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value.strip()
    return sections


def _convert(path, section: str, values: dict[str, str]) -> dict:
    out = {}
    for key, raw in values.items():
        converter = _SECTIONS[section][key][0]
        try:
            out[key] = converter(raw)
        except ValueError as exc:
            raise InvalidConfig(
                f"{path}: [{section}] {key} = {raw!r}: {exc}") from None
    return out


def load_cli_config(path: str | Path | None,
                    seed_override: int | None = None) -> CliConfig:
    """Assemble the merged config: defaults, then file, then flag overrides.

    A --seed override lands on the run, synth, and train seeds together so a
    single flag pins the whole pipeline.
    """
    raw = parse_sections(path) if path is not None else {}
    values = {name: _convert(path, name, raw.get(name, {})) for name in _SECTIONS}

    run_vals = values["run"]
    synth_vals = values["synth"]
    train_vals = values["train"]

    if seed_override is not None:
        run_vals["seed"] = seed_override
    run = RunConfig(**run_vals)
    # synth and train inherit the run seed unless set explicitly
    synth_vals.setdefault("seed", run.seed)
    train_vals.setdefault("seed", run.seed)
    if seed_override is not None:
        synth_vals["seed"] = seed_override
        train_vals["seed"] = seed_override

    weight_vals = {k: train_vals.pop(k) for k in _WEIGHT_KEYS if k in train_vals}
    if weight_vals:
        train_vals["weights"] = LossWeights(**weight_vals)

    return CliConfig(
        run=run,
        data=DataConfig(**values["data"]),
        synth=SynthConfig(**synth_vals),
        train=TrainConfig(**train_vals),
        eval=EvalConfig(**values["eval"]),
    )
