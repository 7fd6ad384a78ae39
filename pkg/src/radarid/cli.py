"""Command-line entry point.

Subcommands: ``synth``, ``ingest-check``, ``preprocess``, ``train``, ``grid``,
``report``. A JSON config file (``--config``) is the source of truth for each
run; individual flags override single keys, unknown keys are rejected. Exit
codes: 0 success, 2 invalid config, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .datamodel import FEATURE_DIM, DomainTag, validate_recording
from .errors import CheckpointError, ConfigError, RadaridError
from .evaluation import micro_f1, predict
from .features import (
    apply_scaler,
    fit_scaler,
    make_windows,
    recording_features,
    scale_windows,
)
from .grid import (
    METHOD_ORDER,
    ExperimentGrid,
    GridRow,
    ReportTable,
    cross_distance_rows,
    cross_height_rows,
    emit_report,
    run_grid,
)
from .ingest import assemble_dataset, load_manifest, stratified_indices
from .models import build_cnn, build_fcl
from .synthgen import default_suite, dynamic_suite
from .training import (
    DomainPair,
    TrainConfig,
    save_checkpoint,
    train_ssda,
    train_supervised,
    train_uda,
    write_history_csv,
)

log = logging.getLogger("radarid")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4


def _parse_domain(value) -> DomainTag:
    """Accept ``{"ambience":..,"placement":..,"radar_state":..}`` or "sunny:7[:static]"."""
    if isinstance(value, DomainTag):
        return value
    if isinstance(value, dict):
        unknown = set(value) - {"ambience", "placement", "radar_state"}
        if unknown:
            raise ConfigError(f"unknown domain keys {sorted(unknown)}")
        try:
            return DomainTag(
                str(value["ambience"]),
                float(value["placement"]),
                str(value.get("radar_state", "static")),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid domain {value!r}: {exc}") from exc
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(
                f"domain {value!r} must look like 'ambience:placement[:radar_state]'"
            )
        try:
            return DomainTag(
                parts[0], float(parts[1]), parts[2] if len(parts) == 3 else "static"
            )
        except ValueError as exc:
            raise ConfigError(f"invalid domain {value!r}: {exc}") from exc
    raise ConfigError(f"cannot interpret domain spec {value!r}")


@dataclass
class _Command:
    """Base for per-command configs: merge file + flags, reject unknown keys."""

    @classmethod
    def build(cls, args: argparse.Namespace) -> "_Command":
        merged = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            try:
                with open(path, "r", encoding="utf-8") as handle:
                    raw = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON at offset {exc.pos}") from exc
            if not isinstance(raw, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
            merged.update(raw)
        known = {f.name for f in fields(cls)}
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(
                f"unknown config keys {sorted(unknown)}; known: {sorted(known)}"
            )
        for name in known:
            value = getattr(args, name, None)
            if value is not None:
                merged[name] = value
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _train_config(config) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=float(config.learning_rate),
            batch_size=int(config.batch_size),
            epochs=int(config.epochs),
            seed=int(config.seed),
            grl_lambda=float(config.grl_lambda),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learning-rate", dest="learning_rate", type=float,
                        help="SGD learning rate (default 0.01)")
    parser.add_argument("--batch-size", dest="batch_size", type=int,
                        help="mini-batch size (default 32)")
    parser.add_argument("--epochs", type=int, help="training epochs (default 100)")
    parser.add_argument("--grl-lambda", dest="grl_lambda", type=float,
                        help="gradient-reversal coefficient (default 1.0)")
    parser.add_argument("--split-ratio", dest="split_ratio", type=float,
                        help="train fraction of the stratified split (default 0.7)")
    parser.add_argument("--split-seed", dest="split_seed", type=int,
                        help="seed of the stratified split (default 1729)")


# -- synth -----------------------------------------------------------------------


@dataclass
class SynthConfig(_Command):
    out_dir: str = "synth_data"
    seed: int = 7
    frames_per_recording: int = 239
    suite: str = "static"


def cmd_synth(config: SynthConfig) -> int:
    if config.suite == "static":
        suite = default_suite(int(config.frames_per_recording), int(config.seed))
    elif config.suite == "dynamic":
        suite = dynamic_suite(int(config.frames_per_recording), int(config.seed))
    else:
        raise ConfigError(f"suite must be 'static' or 'dynamic', got {config.suite!r}")
    manifest_path = suite.write_dataset(config.out_dir)
    log.info(
        "wrote %d recordings (%d classes x %d domains) under %s",
        len(suite.classes) * len(suite.domains),
        len(suite.classes),
        len(suite.domains),
        config.out_dir,
    )
    print(manifest_path)
    return EXIT_OK


# -- ingest-check ------------------------------------------------------------------


@dataclass
class IngestCheckConfig(_Command):
    dataset: str = ""


def cmd_ingest_check(config: IngestCheckConfig) -> int:
    if not config.dataset:
        raise ConfigError("ingest-check requires a dataset manifest path")
    manifest_path = Path(config.dataset)
    collection = assemble_dataset(load_manifest(manifest_path), manifest_path.parent)
    total = 0
    for recording in collection.recordings:
        findings = validate_recording(recording.frames)
        total += len(findings)
        if not findings:
            print(f"{recording.name}: OK ({len(recording.frames)} frames)")
        for finding in findings:
            print(
                f"{recording.name}:{finding.position}: {finding.kind}: {finding.message}"
            )
    print(f"checked {len(collection.recordings)} recordings, {total} finding(s)")
    return EXIT_OK


# -- preprocess --------------------------------------------------------------------


@dataclass
class PreprocessConfig(_Command):
    dataset: str = ""
    out_dir: str = "features_out"


def cmd_preprocess(config: PreprocessConfig) -> int:
    if not config.dataset:
        raise ConfigError("preprocess requires a dataset manifest path")
    manifest_path = Path(config.dataset)
    collection = assemble_dataset(load_manifest(manifest_path), manifest_path.parent)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "row_index," + ",".join(f"f{i}" for i in range(FEATURE_DIM))
    for recording in collection.recordings:
        rows = recording_features(recording.frames)
        path = out_dir / (Path(recording.name).stem + "_features.csv")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(header + "\n")
            for index, row in enumerate(rows):
                handle.write(f"{index}," + ",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote feature dumps for {len(collection.recordings)} recordings to {out_dir}")
    return EXIT_OK


# -- train -------------------------------------------------------------------------


@dataclass
class TrainCommandConfig(_Command):
    dataset: str = ""
    method: str = "cnn"
    train_domain: object = None
    target_domain: object = None
    labeled_fraction: float | None = None
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    grl_lambda: float = 1.0
    split_ratio: float = 0.7
    split_seed: int = 1729
    split_by_recording: bool = False
    out_dir: str = "train_out"


def _recording_datasets(recordings, as_windows: bool):
    xs, ys = [], []
    for recording in recordings:
        rows = recording_features(recording.frames)
        data = make_windows(rows) if as_windows else rows
        xs.append(data)
        ys.append(np.full(len(data), recording.label.index))
    return xs, ys


def _split_domain(recordings, as_windows, ratio, seed, names, by_recording):
    """(x_train, y_train, x_test, y_test) for one domain's examples."""
    xs, ys = _recording_datasets(recordings, as_windows)
    if by_recording:
        rec_labels = [r.label.index for r in recordings]
        train_idx, test_idx = stratified_indices(rec_labels, ratio, seed, names)
        stack = lambda idx: (
            np.concatenate([xs[i] for i in idx]),
            np.concatenate([ys[i] for i in idx]),
        )
        (x_train, y_train), (x_test, y_test) = stack(train_idx), stack(test_idx)
    else:
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        train_idx, test_idx = stratified_indices(y, ratio, seed, names)
        x_train, y_train = x[train_idx], y[train_idx]
        x_test, y_test = x[test_idx], y[test_idx]
    return x_train, y_train, x_test, y_test


def cmd_train(config: TrainCommandConfig) -> int:
    method = config.method.lower()
    if method not in ("fcl", "cnn", "uda", "ssda"):
        raise ConfigError(f"method must be one of fcl|cnn|uda|ssda, got {config.method!r}")
    if not config.dataset:
        raise ConfigError("train requires a dataset manifest path")
    if config.train_domain is None:
        raise ConfigError("train requires --train-domain")
    adaptive = method in ("uda", "ssda")
    if adaptive and config.target_domain is None:
        raise ConfigError(f"{method} requires --target-domain")
    if method == "uda" and config.labeled_fraction is not None:
        raise ConfigError(
            "uda must not see target labels; --labeled-fraction contradicts it "
            "(use method=ssda)"
        )
    fraction = 0.1 if config.labeled_fraction is None else float(config.labeled_fraction)
    if method == "ssda" and not 0.0 < fraction <= 1.0:
        raise ConfigError(f"labeled_fraction must lie in (0, 1], got {fraction}")

    manifest_path = Path(config.dataset)
    collection = assemble_dataset(load_manifest(manifest_path), manifest_path.parent)
    names = collection.labelset.names
    train_domain = _parse_domain(config.train_domain)
    as_windows = method != "fcl"
    cfg = _train_config(config)

    source = collection.by_domain(train_domain)
    if not source:
        raise ConfigError(f"dataset has no recordings for domain {train_domain}")
    x_train_raw, y_train, x_src_test_raw, y_src_test = _split_domain(
        source, as_windows, float(config.split_ratio), int(config.split_seed),
        names, bool(config.split_by_recording),
    )
    if as_windows:
        scaler = fit_scaler(x_train_raw.reshape(-1, FEATURE_DIM))
        scale = lambda data: scale_windows(scaler, data)
    else:
        scaler = fit_scaler(x_train_raw)
        scale = lambda data: apply_scaler(scaler, data)
    x_train = scale(x_train_raw)

    if method == "fcl":
        model = build_fcl(
            x_train.shape[1], len(names), cfg.seed,
            scaler=scaler, labelset=collection.labelset,
        )
        run = train_supervised(model, x_train, y_train, cfg)
        x_eval, y_eval = scale(x_src_test_raw), y_src_test
    elif method == "cnn":
        model = build_cnn(
            len(names), cfg.seed, with_domain_head=False,
            scaler=scaler, labelset=collection.labelset,
        )
        run = train_supervised(model, x_train, y_train, cfg)
        x_eval, y_eval = scale(x_src_test_raw), y_src_test
    else:
        target_domain = _parse_domain(config.target_domain)
        target = collection.by_domain(target_domain)
        if not target:
            raise ConfigError(f"dataset has no recordings for domain {target_domain}")
        xt_train_raw, yt_train, xt_test_raw, yt_test = _split_domain(
            target, True, float(config.split_ratio), int(config.split_seed),
            names, bool(config.split_by_recording),
        )
        xt_train = scale(xt_train_raw)
        model = build_cnn(
            len(names), cfg.seed, scaler=scaler, labelset=collection.labelset,
            grl_lambda=cfg.grl_lambda,
        )
        if method == "uda":
            pair = DomainPair.unsupervised(x_train, y_train, xt_train)
            run = train_uda(model, pair, cfg)
        else:
            pair = DomainPair.semi_supervised(x_train, y_train, xt_train, yt_train, fraction)
            run = train_ssda(model, pair, cfg)
        x_eval, y_eval = scale(xt_test_raw), yt_test

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_dir / "checkpoint.json")
    write_history_csv(run.history, out_dir / "history.csv")

    train_f1 = micro_f1(predict(model, x_train), y_train)
    test_f1 = micro_f1(predict(model, x_eval), y_eval)
    print(f"train_f1={train_f1:.6f}")
    print(f"test_f1={test_f1:.6f}")
    return EXIT_OK


# -- grid --------------------------------------------------------------------------


@dataclass
class GridConfig(_Command):
    dataset: str = ""
    preset: str | None = None
    rows: list | None = None
    seeds: list | None = None
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    grl_lambda: float = 1.0
    split_ratio: float = 0.7
    split_seed: int = 1729
    parallelism: int = 1
    out_dir: str = "grid_out"


def _grid_rows(config: GridConfig) -> tuple[GridRow, ...]:
    if config.preset and config.rows:
        raise ConfigError("give either 'preset' or 'rows', not both")
    if config.preset:
        presets = {"cross_height": cross_height_rows, "cross_distance": cross_distance_rows}
        if config.preset not in presets:
            raise ConfigError(
                f"unknown preset {config.preset!r}; available: {sorted(presets)}"
            )
        return presets[config.preset]()
    rows = []
    for i, raw in enumerate(config.rows or []):
        if not isinstance(raw, dict):
            raise ConfigError(f"grid row {i} must be an object")
        unknown = set(raw) - {"train_domain", "test_domain", "methods", "allow_same_domain"}
        if unknown:
            raise ConfigError(f"grid row {i}: unknown keys {sorted(unknown)}")
        try:
            rows.append(
                GridRow(
                    _parse_domain(raw["train_domain"]),
                    _parse_domain(raw["test_domain"]),
                    tuple(raw.get("methods", METHOD_ORDER)),
                    allow_same_domain=bool(raw.get("allow_same_domain", False)),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"grid row {i}: {exc}") from exc
    return tuple(rows)


def cmd_grid(config: GridConfig) -> int:
    if not config.dataset:
        raise ConfigError("grid requires a dataset manifest path")
    rows = _grid_rows(config)
    seeds = tuple(int(s) for s in (config.seeds if config.seeds is not None else (0, 1, 2)))
    grid = ExperimentGrid(rows, seeds)
    manifest_path = Path(config.dataset)
    collection = assemble_dataset(load_manifest(manifest_path), manifest_path.parent)
    table = run_grid(
        grid,
        collection,
        _train_config(config),
        split_ratio=float(config.split_ratio),
        split_seed=int(config.split_seed),
        parallelism=int(config.parallelism),
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt, suffix in (("csv", "csv"), ("json", "json"), ("markdown", "md")):
        path = out_dir / f"report.{suffix}"
        path.write_bytes(emit_report(table, fmt))
        print(path)
    return EXIT_OK


# -- report ------------------------------------------------------------------------


@dataclass
class ReportConfig(_Command):
    input: str = ""
    format: str = "markdown"
    out_dir: str | None = None


def cmd_report(config: ReportConfig) -> int:
    if not config.input:
        raise ConfigError("report requires an input report JSON path")
    with open(config.input, "r", encoding="utf-8") as handle:
        try:
            table = ReportTable.from_dict(json.load(handle))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{config.input}: not a report JSON ({exc})") from exc
    if config.out_dir is None:
        sys.stdout.write(emit_report(table, config.format).decode("utf-8"))
        return EXIT_OK
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt, suffix in (("csv", "csv"), ("json", "json"), ("markdown", "md")):
        path = out_dir / f"report.{suffix}"
        path.write_bytes(emit_report(table, fmt))
        print(path)
    return EXIT_OK


# -- wiring ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarid",
        description="mmWave radar object recognition: synthesize, train, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"radarid {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="chatty logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset (CSVs + manifest)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default synth_data)")
    p.add_argument("--seed", type=int, help="generation seed (default 7)")
    p.add_argument("--frames-per-recording", dest="frames_per_recording", type=int,
                   help="frames per recording (default 239)")
    p.add_argument("--suite", choices=["static", "dynamic"],
                   help="object/domain suite (default static)")
    p.set_defaults(config_cls=SynthConfig, handler=cmd_synth)

    p = sub.add_parser("ingest-check", help="validate every recording in a dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="manifest path")
    p.set_defaults(config_cls=IngestCheckConfig, handler=cmd_ingest_check)

    p = sub.add_parser("preprocess", help="dump per-frame feature rows as CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="manifest path")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.set_defaults(config_cls=PreprocessConfig, handler=cmd_preprocess)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="manifest path")
    p.add_argument("--method", choices=["fcl", "cnn", "uda", "ssda"],
                   help="training regime (default cnn)")
    p.add_argument("--train-domain", dest="train_domain",
                   help="source domain, e.g. sunny:7 or sunny:42:dynamic")
    p.add_argument("--target-domain", dest="target_domain",
                   help="target domain for uda/ssda")
    p.add_argument("--labeled-fraction", dest="labeled_fraction", type=float,
                   help="revealed target-label fraction for ssda (default 0.1)")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--split-by-recording", dest="split_by_recording",
                   action="store_const", const=True,
                   help="split whole recordings instead of windows (leak-free)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    _add_train_flags(p)
    p.set_defaults(config_cls=TrainCommandConfig, handler=cmd_train)

    p = sub.add_parser("grid", help="run a cross-domain experiment grid")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="manifest path")
    p.add_argument("--preset", choices=["cross_height", "cross_distance"],
                   help="paper-shaped 6-row grid")
    p.add_argument("--seeds", type=int, nargs="+", help="run seeds (default 0 1 2)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--parallelism", type=int, help="parallel grid cells (default 1)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    _add_train_flags(p)
    p.set_defaults(config_cls=GridConfig, handler=cmd_grid)

    p = sub.add_parser("report", help="reformat an existing report JSON")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--input", help="report JSON path")
    p.add_argument("--format", choices=["csv", "json", "markdown"],
                   help="stdout format (default markdown)")
    p.add_argument("--out-dir", dest="out_dir",
                   help="write all three formats here instead of stdout")
    p.set_defaults(config_cls=ReportConfig, handler=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = args.config_cls.build(args)
        return args.handler(config)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RadaridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
