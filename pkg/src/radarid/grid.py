"""Cross-domain experiment grid: declarative rows, seeded runs, report tables.

A grid row names a training domain, a testing domain, and the methods to run
on that pair. Methods:

* ``FCL``  - supervised fully connected model on per-frame feature rows,
* ``CNN``  - supervised 1-D CNN on flattened 40-row windows,
* ``UDA``  - adversarial adaptation; the target's train split participates
  unlabeled,
* ``SSDA10``/``SSDA20`` - as UDA plus a stratified 10%/20% of the target
  train split revealed to the object loss.

Every domain is split 70/30 (stratified, fixed split seed) once; all methods
train on the source train split and are scored on the target's held-out test
split, so in-domain and cross-domain cells stay comparable. Feature scaling
is always fitted on source training rows only. Each (row, method, seed) run
derives its own RNG stream, and parallelism degree 1 (the default) makes
reports byte-reproducible.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .datamodel import FEATURE_DIM, WINDOW_ROWS, DomainTag, LabelSet
from .errors import MissingDomainError
from .evaluation import micro_f1, predict
from .features import fit_scaler, make_windows, recording_features, scale_windows, apply_scaler
from .ingest import LabeledFrameCollection, Recording, stratified_indices
from .models import build_cnn, build_fcl
from .training import DomainPair, TrainConfig, train_ssda, train_supervised, train_uda

#: Canonical method order used everywhere reports are emitted.
METHOD_ORDER = ("FCL", "CNN", "UDA", "SSDA10", "SSDA20")

ADAPTATION_FRACTIONS = {"UDA": 0.0, "SSDA10": 0.10, "SSDA20": 0.20}

DEFAULT_SPLIT_RATIO = 0.7
DEFAULT_SPLIT_SEED = 1729


@dataclass(frozen=True)
class GridRow:
    train_domain: DomainTag
    test_domain: DomainTag
    methods: tuple[str, ...] = METHOD_ORDER
    allow_same_domain: bool = False

    def __post_init__(self):
        methods = tuple(self.methods)
        unknown = [m for m in methods if m not in METHOD_ORDER]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; valid: {list(METHOD_ORDER)}")
        object.__setattr__(self, "methods", methods)
        if self.train_domain == self.test_domain and not self.allow_same_domain:
            adaptive = [m for m in methods if m in ADAPTATION_FRACTIONS]
            if adaptive:
                raise ValueError(
                    f"adaptation methods {adaptive} need distinct train/test domains "
                    "(or allow_same_domain=True)"
                )


@dataclass(frozen=True)
class ExperimentGrid:
    rows: tuple[GridRow, ...]
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class CellResult:
    f1_mean: float
    f1_per_seed: tuple[float, ...]


@dataclass(frozen=True)
class ReportTable:
    grid: ExperimentGrid
    cells: dict  # (row_index, method) -> CellResult

    def cell(self, row_index: int, method: str) -> CellResult:
        return self.cells[(row_index, method)]

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.grid.seeds),
            "rows": [
                {
                    "train_domain": _domain_to_dict(row.train_domain),
                    "test_domain": _domain_to_dict(row.test_domain),
                    "cells": {
                        method: {
                            "f1_mean": self.cells[(i, method)].f1_mean,
                            "f1_per_seed": list(self.cells[(i, method)].f1_per_seed),
                        }
                        for method in row.methods
                    },
                }
                for i, row in enumerate(self.grid.rows)
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ReportTable":
        rows = []
        cells = {}
        for i, row_raw in enumerate(raw["rows"]):
            methods = tuple(row_raw["cells"].keys())
            row = GridRow(
                _domain_from_dict(row_raw["train_domain"]),
                _domain_from_dict(row_raw["test_domain"]),
                methods,
                allow_same_domain=True,
            )
            rows.append(row)
            for method, cell in row_raw["cells"].items():
                cells[(i, method)] = CellResult(
                    float(cell["f1_mean"]), tuple(float(v) for v in cell["f1_per_seed"])
                )
        grid = ExperimentGrid(tuple(rows), tuple(raw["seeds"]))
        return cls(grid, cells)


def _domain_to_dict(domain: DomainTag) -> dict:
    return {
        "ambience": domain.ambience,
        "placement": domain.placement,
        "radar_state": domain.radar_state,
    }


def _domain_from_dict(raw: dict) -> DomainTag:
    return DomainTag(raw["ambience"], float(raw["placement"]), raw["radar_state"])


def cross_height_rows(methods: Sequence[str] = METHOD_ORDER) -> tuple[GridRow, ...]:
    """The six same-ambience, cross-height domain pairs (static radar)."""
    pairs = [(53, 7), (7, 53)]
    rows = []
    for high, low in pairs:
        for ambience in ("sunny", "night", "lablight"):
            rows.append(
                GridRow(
                    DomainTag(ambience, high, "static"),
                    DomainTag(ambience, low, "static"),
                    tuple(methods),
                )
            )
    return tuple(rows)


def cross_distance_rows(methods: Sequence[str] = METHOD_ORDER) -> tuple[GridRow, ...]:
    """The six same-ambience, cross-distance domain pairs (dynamic radar)."""
    pairs = [(84, 42), (42, 84)]
    rows = []
    for far, near in pairs:
        for ambience in ("sunny", "night", "lablight"):
            rows.append(
                GridRow(
                    DomainTag(ambience, far, "dynamic"),
                    DomainTag(ambience, near, "dynamic"),
                    tuple(methods),
                )
            )
    return tuple(rows)


# -- per-domain data preparation --------------------------------------------------


@dataclass
class _DomainData:
    """Unscaled row and window datasets of one domain, split once."""

    rows_x: np.ndarray
    rows_y: np.ndarray
    rows_train: np.ndarray
    rows_test: np.ndarray
    windows_x: np.ndarray
    windows_y: np.ndarray
    windows_train: np.ndarray
    windows_test: np.ndarray


def _domain_data(
    recordings: Sequence[Recording],
    split_ratio: float,
    split_seed: int,
    labelset: LabelSet,
) -> _DomainData:
    row_parts, row_labels, window_parts, window_labels = [], [], [], []
    for recording in recordings:
        rows = recording_features(recording.frames)
        windows = make_windows(rows, WINDOW_ROWS, 1)
        row_parts.append(rows)
        row_labels.append(np.full(len(rows), recording.label.index))
        window_parts.append(windows)
        window_labels.append(np.full(len(windows), recording.label.index))
    rows_x = np.concatenate(row_parts)
    rows_y = np.concatenate(row_labels)
    windows_x = np.concatenate(window_parts)
    windows_y = np.concatenate(window_labels)
    rows_train, rows_test = stratified_indices(
        rows_y, split_ratio, split_seed, labelset.names
    )
    windows_train, windows_test = stratified_indices(
        windows_y, split_ratio, split_seed, labelset.names
    )
    return _DomainData(
        rows_x, rows_y, rows_train, rows_test,
        windows_x, windows_y, windows_train, windows_test,
    )


def derive_run_seed(seed: int, row_index: int, method: str) -> int:
    """Stable per-run seed stream: hash of (seed, row, method position)."""
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(row_index, METHOD_ORDER.index(method))
    )
    return int(sequence.generate_state(1, np.uint32)[0])


def _run_cell(args) -> tuple[tuple[int, str], CellResult]:
    (row_index, row, method, source, target, seeds, cfg, n_classes) = args

    scores = []
    for seed in seeds:
        run_seed = derive_run_seed(seed, row_index, method)
        run_cfg = replace(cfg, seed=run_seed)
        if method == "FCL":
            scaler = fit_scaler(source.rows_x[source.rows_train])
            x_train = apply_scaler(scaler, source.rows_x[source.rows_train])
            y_train = source.rows_y[source.rows_train]
            x_test = apply_scaler(scaler, target.rows_x[target.rows_test])
            y_test = target.rows_y[target.rows_test]
            model = build_fcl(x_train.shape[1], n_classes, run_seed, scaler=scaler)
            train_supervised(model, x_train, y_train, run_cfg)
        else:
            train_windows = source.windows_x[source.windows_train]
            scaler = fit_scaler(train_windows.reshape(-1, FEATURE_DIM))
            x_train = scale_windows(scaler, train_windows)
            y_train = source.windows_y[source.windows_train]
            x_test = scale_windows(scaler, target.windows_x[target.windows_test])
            y_test = target.windows_y[target.windows_test]
            if method == "CNN":
                model = build_cnn(
                    n_classes, run_seed, with_domain_head=False, scaler=scaler
                )
                train_supervised(model, x_train, y_train, run_cfg)
            else:
                target_pool = scale_windows(
                    scaler, target.windows_x[target.windows_train]
                )
                model = build_cnn(n_classes, run_seed, scaler=scaler)
                fraction = ADAPTATION_FRACTIONS[method]
                if fraction == 0.0:
                    pair = DomainPair.unsupervised(x_train, y_train, target_pool)
                    train_uda(model, pair, run_cfg)
                else:
                    pair = DomainPair.semi_supervised(
                        x_train,
                        y_train,
                        target_pool,
                        target.windows_y[target.windows_train],
                        fraction,
                    )
                    train_ssda(model, pair, run_cfg)
        scores.append(micro_f1(predict(model, x_test), y_test))
    return (row_index, method), CellResult(float(np.mean(scores)), tuple(scores))


def run_grid(
    grid: ExperimentGrid,
    data,
    cfg: TrainConfig,
    *,
    split_ratio: float = DEFAULT_SPLIT_RATIO,
    split_seed: int = DEFAULT_SPLIT_SEED,
    parallelism: int = 1,
) -> ReportTable:
    """Run every (row, method) cell over every seed and aggregate mean F1.

    ``data`` is a :class:`LabeledFrameCollection`; a synthetic suite (anything
    with a ``build_collection`` method) is materialized first. Cells are
    independent; ``parallelism > 1`` fans them out over processes, while the
    default of 1 keeps runs bit-reproducible in a single process.
    """
    if hasattr(data, "build_collection"):
        data = data.build_collection()
    if not isinstance(data, LabeledFrameCollection):
        raise TypeError(
            "data must be a LabeledFrameCollection or a synthetic suite, "
            f"got {type(data).__name__}"
        )

    needed: list[DomainTag] = []
    for row in grid.rows:
        for domain in (row.train_domain, row.test_domain):
            if domain not in needed:
                needed.append(domain)
    domain_data = {}
    for domain in needed:
        recordings = data.by_domain(domain)
        if not recordings:
            raise MissingDomainError(f"dataset has no recordings for domain {domain}")
        domain_data[domain] = _domain_data(
            recordings, split_ratio, split_seed, data.labelset
        )

    jobs = [
        (
            row_index,
            row,
            method,
            domain_data[row.train_domain],
            domain_data[row.test_domain],
            grid.seeds,
            cfg,
            len(data.labelset),
        )
        for row_index, row in enumerate(grid.rows)
        for method in row.methods
    ]

    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]

    return ReportTable(grid, dict(results))


# -- report emission ---------------------------------------------------------------


def _ordered_methods(methods: Sequence[str]) -> list[str]:
    return [m for m in METHOD_ORDER if m in methods]


def emit_report(table: ReportTable, fmt: str) -> bytes:
    """Render a report deterministically as ``csv``, ``json``, or ``markdown``.

    Rows follow declaration order and methods the canonical order, so the
    same table always serializes to identical bytes.
    """
    if fmt == "json":
        return (json.dumps(table.to_dict(), indent=1) + "\n").encode("utf-8")
    if fmt == "csv":
        n_seeds = len(table.grid.seeds)
        header = "train_domain,test_domain,method,f1_mean" + "".join(
            f",f1_seed_{i}" for i in range(n_seeds)
        )
        lines = [header]
        for i, row in enumerate(table.grid.rows):
            for method in _ordered_methods(row.methods):
                cell = table.cells[(i, method)]
                lines.append(
                    f"{row.train_domain},{row.test_domain},{method},{cell.f1_mean!r}"
                    + "".join(f",{v!r}" for v in cell.f1_per_seed)
                )
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt == "markdown":
        methods = _ordered_methods(
            {m for row in table.grid.rows for m in row.methods}
        )
        titles = {
            "FCL": "FCL",
            "CNN": "CNN",
            "UDA": "UDA",
            "SSDA10": "SSDA 10%",
            "SSDA20": "SSDA 20%",
        }
        lines = [
            "| Training domain | Testing domain | "
            + " | ".join(titles[m] for m in methods)
            + " |",
            "| --- | --- | " + " | ".join("---" for _ in methods) + " |",
        ]
        for i, row in enumerate(table.grid.rows):
            values = []
            for method in methods:
                cell = table.cells.get((i, method))
                values.append("-" if cell is None else f"{cell.f1_mean:.3f}")
            lines.append(
                f"| {row.train_domain} | {row.test_domain} | " + " | ".join(values) + " |"
            )
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}; use csv, json, or markdown")
