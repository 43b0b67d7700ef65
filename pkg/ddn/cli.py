"""Command-line entry point.

Usage:
    python scripts/run_cli.py synth --n 20 --cycles 80 --seed 7 --data workspace/data
    python scripts/run_cli.py train --data workspace/data --out workspace/runs/demo
    python scripts/run_cli.py eval --out workspace/runs/demo --split test
    python scripts/run_cli.py predict --out workspace/runs/demo --battery workspace/data/synth_000.csv
    python scripts/run_cli.py inspect-attention --out workspace/runs/demo
    python scripts/run_cli.py size-study --data workspace/data --sizes 2,4,8,16

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure during training.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ddn import config as settings
from ddn.checkpoint import Checkpoint, CheckpointStore
from ddn.guardrails import ConfigError, DataError, NumericFailure, ShapeError, TrainingLogger
from ddn.model import DdnConfig
from ddn.trainer import TrainConfig, predict, train, with_overrides
from evaluation.attention import attention_study, traces_from_weights
from evaluation.metrics import compute_metrics, per_battery_metrics, per_cycle_metrics
from evaluation.report import attention_table, emit_report, prediction_table, write_table
from evaluation.size_study import size_study, study_table
from pipeline.frames import build_fleet_frames, build_frames, split_by_ids, split_fleet
from pipeline.ingest import load_battery, load_fleet
from pipeline.profiles import PROFILE_NAMES, NormProfile, denormalize_capacity, get_profile
from synth.generator import SpecSampler, synth_fleet, write_fleet

logger = logging.getLogger("ddn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_PROFILE = "mit"
SPLITS = ("all", "train", "val", "test")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError (exit code 1)."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


# ── Run configuration ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RunConfig:
    command: str
    data_dir: str
    out_dir: str
    profile: NormProfile
    ddn_config: DdnConfig
    train_config: TrainConfig
    seed: int
    soh: bool


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(data) - {"profile", "profile_file", "soh", "model", "train"}
    if unknown:
        raise ConfigError(f"unknown config file sections: {', '.join(sorted(unknown))}")
    return data


def _ids(text: Optional[str]) -> list[str]:
    if not text:
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge built-in profile defaults < ``--config`` file < flags."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    profile = get_profile(
        args.profile or file_cfg.get("profile") or DEFAULT_PROFILE,
        args.profile_file or file_cfg.get("profile_file"),
    )

    model = {"history_n": profile.history_n, **file_cfg.get("model", {})}
    if args.pooling is not None:
        model["pooling"] = args.pooling
    if args.history_n is not None:
        model["history_n"] = args.history_n
    if args.points is not None:
        model["feature_lengths"] = [1, args.points, args.points]
    if args.embed_dim is not None:
        n_features = len(model.get("feature_lengths", DdnConfig().feature_lengths))
        model["embed_dims"] = [args.embed_dim] * n_features
    if args.mlp_hidden is not None:
        model["mlp_hidden"] = args.mlp_hidden
    if args.attn_hidden is not None:
        model["attn_hidden"] = args.attn_hidden
    ddn_config = DdnConfig.from_dict(model)

    seed = settings.DEFAULT_SEED if args.seed is None else args.seed
    train_config = TrainConfig.from_dict({"rng_seed": seed, **file_cfg.get("train", {})})
    if args.seed is not None:
        train_config = replace(train_config, rng_seed=args.seed)
    train_config = with_overrides(
        train_config,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        patience=args.patience,
        learning_rate=args.lr,
    )
    if args.timing is not None:
        train_config = replace(train_config, record_walltime=args.timing)

    soh = bool(args.soh or file_cfg.get("soh", False) or profile.soh)
    return RunConfig(
        command=args.command,
        data_dir=args.data,
        out_dir=args.out,
        profile=profile,
        ddn_config=ddn_config,
        train_config=train_config,
        seed=seed,
        soh=soh,
    )


def _load_checkpoint(args: argparse.Namespace) -> tuple[Checkpoint, NormProfile]:
    path = args.checkpoint or os.path.join(args.out, settings.CHECKPOINT_FILE)
    checkpoint = CheckpointStore(path).load()
    if args.profile:
        profile = get_profile(args.profile, args.profile_file)
    else:
        profile = NormProfile.from_dict(checkpoint.profile)
    return checkpoint, profile


# ── Commands ──────────────────────────────────────────────────────────────────


def cmd_synth(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    if args.cycles < 2:
        raise ConfigError(f"--cycles must be >= 2, got {args.cycles}")
    seed = settings.DEFAULT_SEED if args.seed is None else args.seed
    if args.path_dependent:
        sampler = SpecSampler.path_dependent_default(cycles=args.cycles)
    else:
        sampler = SpecSampler(cycles=args.cycles)
    fleet, specs = synth_fleet(args.n, sampler, seed)
    written = write_fleet(fleet, specs, args.data, force=args.force)
    print(f"wrote {len(fleet)} batteries to {args.data}")
    logger.debug("files: %s", written)
    return EXIT_OK


def _split(run: RunConfig, fleet, args: argparse.Namespace):
    if args.train_ids:
        return split_by_ids(fleet, _ids(args.train_ids), _ids(args.val_ids), _ids(args.test_ids))
    return split_fleet(fleet, seed=run.seed)


def cmd_train(args: argparse.Namespace) -> int:
    run = resolve_run_config(args)
    fleet = load_fleet(run.data_dir)
    train_set, val_set, test_set = _split(run, fleet, args)
    train_frames = build_fleet_frames(train_set, run.ddn_config, run.profile, run.soh)
    val_frames = build_fleet_frames(val_set, run.ddn_config, run.profile, run.soh)

    train_config = run.train_config
    if not val_frames and train_config.early_stopping:
        logger.warning("no validation batteries: early stopping disabled, training for %d epochs",
                       train_config.max_epochs)
        train_config = replace(train_config, early_stopping=False)

    os.makedirs(run.out_dir, exist_ok=True)
    run_logger = TrainingLogger(os.path.join(run.out_dir, settings.TRAINING_LOG_FILE))
    run_logger.reset()
    params, log = train(train_frames, val_frames, run.ddn_config, train_config, run_logger)

    checkpoint = Checkpoint(
        config=run.ddn_config,
        params=params,
        profile=run.profile.to_dict(),
        soh=run.soh,
        metadata={
            "splits": {
                "train": [b.battery_id for b in train_set],
                "val": [b.battery_id for b in val_set],
                "test": [b.battery_id for b in test_set],
            },
            "train_config": {k: v for k, v in train_config.to_dict().items() if k != "record_walltime"},
            "epochs_run": len(log.epochs),
            "best_epoch": log.best_epoch,
            "stop_reason": log.stop_reason,
        },
    )
    store = CheckpointStore(os.path.join(run.out_dir, settings.CHECKPOINT_FILE))
    store.save(checkpoint)
    print(f"trained {len(log.epochs)} epoch(s), best epoch {log.best_epoch}; checkpoint at {store.path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint, profile = _load_checkpoint(args)
    fleet = load_fleet(args.data)
    if args.split != "all":
        splits = checkpoint.metadata.get("splits")
        if not splits:
            raise ConfigError("checkpoint has no recorded splits; use --split all")
        wanted = set(splits.get(args.split, []))
        fleet = [b for b in fleet if b.battery_id in wanted]
        if not fleet:
            raise DataError(f"none of the {args.split} batteries are in {args.data}")

    frames = build_fleet_frames(fleet, checkpoint.config, profile, checkpoint.soh)
    pred, _ = predict(checkpoint.params, checkpoint.config, frames)
    actual = np.array([f.target for f in frames], dtype=np.float64)
    pred_phys = denormalize_capacity(profile, pred)
    actual_phys = denormalize_capacity(profile, actual)
    metrics = compute_metrics(pred_phys, actual_phys)

    emit_report(
        args.out,
        metrics=metrics,
        predictions=prediction_table(frames, pred, profile),
        per_battery=per_battery_metrics([f.battery_id for f in frames], pred_phys, actual_phys),
        per_cycle=per_cycle_metrics([f.target_cycle for f in frames], pred_phys, actual_phys),
        extra={"split": args.split, "units": "soh" if checkpoint.soh else "ah", "batteries": len(fleet)},
    )
    print(f"rmse={metrics.rmse!r} mape={metrics.mape!r} r2={metrics.r2!r} n={metrics.n}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    if not args.battery:
        raise ConfigError("predict needs --battery")
    checkpoint, profile = _load_checkpoint(args)
    history = load_battery(args.battery)
    frames = build_frames(history, checkpoint.config, profile, checkpoint.soh)
    pred, _ = predict(checkpoint.params, checkpoint.config, frames)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, settings.PREDICTIONS_FILE)
    write_table(prediction_table(frames, pred, profile), path)
    print(f"wrote {len(frames)} predictions to {path}")
    return EXIT_OK


def cmd_inspect_attention(args: argparse.Namespace) -> int:
    checkpoint, profile = _load_checkpoint(args)
    if checkpoint.config.pooling != "attention":
        raise ConfigError("checkpoint uses mean pooling: no attention trace to inspect")
    fleet = [load_battery(args.battery)] if args.battery else load_fleet(args.data)

    tables, studies = [], {}
    for history in fleet:
        frames = build_frames(history, checkpoint.config, profile, checkpoint.soh)
        _, alpha = predict(checkpoint.params, checkpoint.config, frames)
        tables.append(attention_table(frames, alpha))
        traces = traces_from_weights([f.t for f in frames], alpha)
        try:
            studies[history.battery_id] = attention_study(traces, history)
        except DataError as exc:
            logger.warning("skipping attention study for %s: %s", history.battery_id, exc)

    emit_report(args.out, studies=studies, attention=pd.concat(tables, ignore_index=True))
    print(f"wrote attention weights for {len(fleet)} batteries to {args.out}")
    return EXIT_OK


def cmd_size_study(args: argparse.Namespace) -> int:
    run = resolve_run_config(args)
    try:
        sizes = [int(s) for s in _ids(args.sizes)]
    except ValueError as exc:
        raise ConfigError(f"--sizes must be a comma list of integers, got '{args.sizes}'") from exc
    fleet = load_fleet(run.data_dir)
    train_set, val_set, test_set = _split(run, fleet, args)
    rows = size_study(train_set + val_set, test_set, sizes, run.ddn_config, run.train_config, run.profile, run.soh)
    os.makedirs(run.out_dir, exist_ok=True)
    path = os.path.join(run.out_dir, settings.SIZE_STUDY_FILE)
    write_table(study_table(rows), path)
    for row in rows:
        print(f"{row.train_size:>4} batteries  test rmse={row.test_rmse!r}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "inspect-attention": cmd_inspect_attention,
    "size-study": cmd_size_study,
}


# ── Parser ────────────────────────────────────────────────────────────────────


def _paths(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", default=settings.DATA_DIR, help="directory of battery CSV files")
    parser.add_argument("--out", default=settings.OUT_DIR, help="run output directory")


def _profile(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--profile", choices=PROFILE_NAMES, default=None,
                        help=f"normalization profile (default {DEFAULT_PROFILE})")
    parser.add_argument("--profile-file", default=None, help="JSON file for --profile custom")


def _run_options(parser: argparse.ArgumentParser) -> None:
    _profile(parser)
    parser.add_argument("--config", default=None, help="JSON run config (overridden by flags)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--soh", action="store_true", help="predict state of health Q_t / Q_0")
    model = parser.add_argument_group("model")
    model.add_argument("--pooling", choices=("mean", "attention"), default=None)
    model.add_argument("--history-n", type=int, default=None)
    model.add_argument("--points", type=int, default=None, help="resampled points per voltage curve")
    model.add_argument("--embed-dim", type=int, default=None)
    model.add_argument("--mlp-hidden", type=int, default=None)
    model.add_argument("--attn-hidden", type=int, default=None)
    training = parser.add_argument_group("training")
    training.add_argument("--epochs", type=int, default=None)
    training.add_argument("--batch-size", type=int, default=None)
    training.add_argument("--patience", type=int, default=None)
    training.add_argument("--lr", type=float, default=None)
    training.add_argument("--timing", action=argparse.BooleanOptionalAction, default=None,
                          help="record wall-clock seconds per epoch (--no-timing logs 0.0)")
    splits = parser.add_argument_group("split")
    splits.add_argument("--train-ids", default=None, help="comma list of training battery ids")
    splits.add_argument("--val-ids", default=None)
    splits.add_argument("--test-ids", default=None)


def _checkpoint_options(parser: argparse.ArgumentParser) -> None:
    _paths(parser)
    _profile(parser)
    parser.add_argument("--checkpoint", default=None, help="checkpoint file (default <out>/checkpoint.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ddn", description="Battery capacity forecasting with a Deep Degradation Network")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic battery fleet")
    p.add_argument("--data", default=settings.DATA_DIR)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--cycles", type=int, default=80)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--path-dependent", action="store_true", help="switch fade rate mid-life")
    p.add_argument("--force", action="store_true", help="overwrite existing battery files")

    p = sub.add_parser("train", help="train and write a checkpoint")
    _paths(p)
    _run_options(p)

    p = sub.add_parser("eval", help="score a checkpoint on a fleet")
    _checkpoint_options(p)
    p.add_argument("--split", choices=SPLITS, default="all")

    p = sub.add_parser("predict", help="per-cycle predictions for one battery")
    _checkpoint_options(p)
    p.add_argument("--battery", default=None, help="battery CSV file")

    p = sub.add_parser("inspect-attention", help="export attention weights and correlations")
    _checkpoint_options(p)
    p.add_argument("--battery", default=None, help="single battery CSV (default: whole --data fleet)")

    p = sub.add_parser("size-study", help="test error against number of training batteries")
    _paths(p)
    _run_options(p)
    p.add_argument("--sizes", default="2,4,8,16", help="comma list of training-set sizes")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
