"""Command-line entry point: synth, preprocess, train, eval, gradcheck.

Global flags: --config <path>, --seed <u64>, --out <dir>. Flags override
config-file values, which override defaults. Exit codes: 1 config errors,
2 data errors, 3 training errors, 4 checkpoint errors, 5 gradient-check
threshold exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import CliConfig, load_cli_config
from .datamodel import FlowTable, SequenceSet, make_sequences
from .errors import (
    CheckpointError,
    ConfigError,
    CpsdaError,
    DataError,
    TrainingError,
)
from .evaluate import confusion, evaluate_domain, report_to_json
from .gradcheck import THRESHOLD, run_gradcheck
from .ingest import (
    DatasetSchema,
    apply_normalizer,
    fit_normalizer,
    load_csv,
    load_schema_preset,
    preset_path,
    read_label_sidecar,
    split,
    synth_generate,
    write_label_sidecar,
    write_table_csv,
)
from .nets import model_summary
from .train import fit, load_checkpoint, require_trained, save_checkpoint

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_TRAINING = 3
EXIT_CHECKPOINT = 4
EXIT_GRADCHECK = 5

_BUNDLED = ("wustl2021", "rospace_lightweight", "synth_source", "synth_target")


def _resolve_schema(value: str) -> DatasetSchema:
    if value in _BUNDLED:
        return load_schema_preset(preset_path(value))
    return load_schema_preset(value)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(cfg: CliConfig, args) -> int:
    out = _out_dir(args)
    result = synth_generate(cfg.synth)
    source_path = out / "source.csv"
    target_path = out / "target.csv"
    sidecar_path = out / "target.labels.csv"
    write_table_csv(result.source, source_path)
    write_table_csv(result.target, target_path)
    write_label_sidecar(result.target_labels, sidecar_path)
    manifest = {
        "seed": cfg.synth.seed,
        "n_source": cfg.synth.n_source,
        "n_target": cfg.synth.n_target,
        "source_dim": cfg.synth.source_dim,
        "target_dim": cfg.synth.target_dim,
        "attack_fraction": cfg.synth.attack_fraction,
        "source_label_mean": float(np.mean(result.source.labels)),
        "target_label_mean": float(np.mean(result.target_labels)),
        "files": [source_path.name, target_path.name, sidecar_path.name],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                       encoding="utf-8")
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def _load_domain(cfg: CliConfig, which: str) -> FlowTable:
    from .datamodel import DomainTag

    if which == "source":
        path, schema_name, tag = cfg.data.source_csv, cfg.data.source_schema, DomainTag.SOURCE
    else:
        path, schema_name, tag = cfg.data.target_csv, cfg.data.target_schema, DomainTag.TARGET
    return load_csv(path, _resolve_schema(schema_name), tag)


def _fit_domain_normalizer(table: FlowTable, train_fraction: float):
    """Stats come from the leading train-fraction rows only, so test-period
    data never leaks into the scaling."""
    n_fit = max(int(table.n_rows * train_fraction), 1)
    head = FlowTable(features=table.features[:n_fit], domain_tag=table.domain_tag,
                     feature_names=table.feature_names)
    return fit_normalizer(head)


def _prepare_domain(cfg: CliConfig, which: str, normalizer=None):
    table = _load_domain(cfg, which)
    norm = normalizer if normalizer is not None else _fit_domain_normalizer(
        table, cfg.data.train_fraction)
    table = apply_normalizer(norm, table)
    sequences = make_sequences(table, cfg.run.sequence_length, cfg.run.stride,
                               cfg.run.label_rule)
    train_seqs, test_seqs = split(sequences, cfg.data.train_fraction,
                                  seed=cfg.run.seed, mode=cfg.data.split_mode,
                                  purge=cfg.data.purge_overlap)
    return table, norm, sequences, train_seqs, test_seqs


def _target_window_labels(cfg: CliConfig, table: FlowTable) -> SequenceSet:
    """Window-level target labels from the sidecar, for evaluation only:
    rebuild the same sequencing over a labeled copy of the table."""
    labels = read_label_sidecar(cfg.data.target_labels_csv)
    labeled = FlowTable(features=table.features, domain_tag=table.domain_tag,
                        feature_names=table.feature_names, labels=labels,
                        timestamps=table.timestamps, boundaries=table.boundaries)
    return make_sequences(labeled, cfg.run.sequence_length, cfg.run.stride,
                          cfg.run.label_rule)


def cmd_preprocess(cfg: CliConfig, args) -> int:
    out = _out_dir(args)
    stats = {}
    for which in ("source", "target"):
        table = _load_domain(cfg, which)
        norm = _fit_domain_normalizer(table, cfg.data.train_fraction)
        scaled = apply_normalizer(norm, table)
        write_table_csv(scaled, out / f"{which}.normalized.csv")
        stats[which] = {"rows": table.n_rows, "features": table.n_features,
                        "mean": norm.mean.tolist(), "std": norm.std.tolist()}
    (out / "normalizers.json").write_text(json.dumps(stats, indent=2) + "\n",
                                          encoding="utf-8")
    print(json.dumps({"written": ["source.normalized.csv",
                                  "target.normalized.csv",
                                  "normalizers.json"],
                      "out": str(out)}, sort_keys=True))
    return EXIT_OK


def cmd_train(cfg: CliConfig, args) -> int:
    from .report import save_history_csv, save_loss_figure

    out = _out_dir(args)
    _, norm_s, _, train_s, _ = _prepare_domain(cfg, "source")
    _, norm_t, _, train_t, _ = _prepare_domain(cfg, "target")

    history_path = out / "history.jsonl"
    with history_path.open("w", encoding="utf-8") as history_fh:
        def log_cb(record: dict) -> None:
            line = json.dumps(record, sort_keys=True)
            print(line, file=sys.stderr)
            history_fh.write(line + "\n")

        result = fit(train_s, train_t, cfg.run, cfg.train, log_cb=log_cb)

    ckpt_path = out / "model.ckpt"
    save_checkpoint(result.state, result.centroids, ckpt_path, cfg.run,
                    cfg.train, normalizers={"source": norm_s, "target": norm_t})
    save_history_csv(result.history, out / "history.csv")
    (out / "model_summary.txt").write_text(
        model_summary(result.state.model) + "\n", encoding="utf-8")
    if cfg.eval.figures and result.history["total"]:
        save_loss_figure(result.history, out / "loss_curves.png")
    print(json.dumps({"checkpoint": str(ckpt_path),
                      "epochs": result.state.epoch,
                      "trained": result.state.trained,
                      "final_total_loss": (result.history["total"][-1]
                                           if result.history["total"] else None)},
                     sort_keys=True))
    return EXIT_OK


def cmd_eval(cfg: CliConfig, args) -> int:
    from .report import save_confusion_figure, save_latent_figure, save_metrics_csv
    from .train import encode_set

    out = _out_dir(args)
    ckpt = Path(cfg.eval.checkpoint)
    if not ckpt.is_absolute() and not ckpt.exists():
        candidate = out / ckpt
        if candidate.exists():
            ckpt = candidate
    bundle = load_checkpoint(ckpt, expect_run_cfg=cfg.run)
    require_trained(bundle)

    reports = []
    latents_by_domain = {}
    preds_by_domain = {}
    for which in cfg.eval.domains:
        norm = bundle.normalizers.get(which)
        table, _, _, _, test_seqs = _prepare_domain(cfg, which, normalizer=norm)
        withheld = None
        if which == "target" and cfg.data.target_labels_csv:
            labeled_seqs = _target_window_labels(cfg, table)
            _, labeled_test = split(labeled_seqs, cfg.data.train_fraction,
                                    seed=cfg.run.seed, mode=cfg.data.split_mode,
                                    purge=cfg.data.purge_overlap)
            withheld = labeled_test.labels
        report, preds = evaluate_domain(bundle.model, bundle.centroids,
                                        test_seqs, which,
                                        withheld_labels=withheld)
        reports.append(report)
        preds_by_domain[which] = preds
        latents_by_domain[which] = encode_set(bundle.model, test_seqs)
        print(report_to_json(report))
        if report.accuracy is not None and cfg.eval.figures:
            labels = withheld if withheld is not None else test_seqs.labels
            save_confusion_figure(confusion(np.asarray(labels), preds), which,
                                  out / f"confusion_{which}.png")

    save_metrics_csv(reports, out / "metrics.csv")
    if cfg.eval.figures and latents_by_domain:
        save_latent_figure(latents_by_domain, preds_by_domain, bundle.centroids,
                           out / "latent_scatter.png")
    if cfg.eval.results_file:
        with Path(cfg.eval.results_file).open("a", encoding="utf-8") as fh:
            for report in reports:
                fh.write(report_to_json(report) + "\n")
    return EXIT_OK


def cmd_gradcheck(cfg: CliConfig, args) -> int:
    errors = run_gradcheck(lambda_grl=cfg.train.lambda_grl,
                           weights=cfg.train.weights,
                           margin=cfg.train.margin,
                           seed=cfg.train.seed)
    worst = max(errors.values())
    for term, err in errors.items():
        print(json.dumps({"term": term, "max_rel_error": err,
                          "threshold": THRESHOLD, "pass": err < THRESHOLD},
                         sort_keys=True))
    print(json.dumps({"worst": worst, "pass": worst < THRESHOLD}, sort_keys=True))
    return EXIT_OK if worst < THRESHOLD else EXIT_GRADCHECK


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="path to a [section] key=value config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override every seed in the pipeline")
    common.add_argument("--out", default="runs", help="output directory")

    parser = argparse.ArgumentParser(
        prog="cpsda",
        description="cross-domain anomaly detection: train on labeled network "
                    "flows, detect on unlabeled multi-layer telemetry")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common],
                   help="write synthetic two-domain CSVs and a label sidecar")
    sub.add_parser("preprocess", parents=[common],
                   help="normalize the configured CSVs and write them back out")
    sub.add_parser("train", parents=[common],
                   help="run adversarial training and write a checkpoint")
    sub.add_parser("eval", parents=[common],
                   help="evaluate a checkpoint; one JSON report per domain")
    sub.add_parser("gradcheck", parents=[common],
                   help="finite-difference check of every loss term")
    return parser


_HANDLERS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_cli_config(args.config, seed_override=args.seed)
        return _HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CpsdaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
