"""Training regimes: supervised, adversarial unsupervised and semi-supervised.

All three run plain SGD. The adversarial regimes draw one source batch and
one target batch per step from independent cyclic iterators (the shorter set
repeats within an epoch), compute the object loss on the labeled batch and
the domain loss on the source+target union (domain labels: source=0,
target=1), and update:

* the object-recognizer head with the object-loss gradient only,
* the domain-classifier head with the domain-loss gradient only,
* the shared feature extractor with ``g_object - lambda * g_domain``, the
  sign flip coming from the gradient-reversal layer.

Determinism contract: the source batch stream is seeded with ``cfg.seed``
exactly as in supervised training (so ``lambda = 0`` reproduces the
supervised trajectory bit for bit), the target stream with
``(cfg.seed, 1)`` and the revealed-target stream with ``(cfg.seed, 2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datamodel import LabelSet
from .errors import (
    CorruptCheckpointError,
    EmptyDatasetError,
    FractionOutOfRangeError,
    VersionMismatchError,
)
from .features import ScalerParams
from .ingest import stratified_indices
from .models import GROUPS, ModelGraph
from .neuralnet import Conv1d, Dense, GradientReversal, Relu, cross_entropy, one_hot, sgd_update

CHECKPOINT_SCHEMA_VERSION = 1

#: Fixed convention for the adversarial domain labels, recorded in checkpoints.
DOMAIN_LABELS = {"source": 0, "target": 1}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    grl_lambda: float = 1.0

    def __post_init__(self):
        # 0 is allowed as the degenerate no-op rate (training must then leave
        # parameters untouched); negative rates are nonsense.
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.grl_lambda < 0:
            raise ValueError("grl_lambda must be non-negative")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    object_loss: float
    domain_loss: float | None
    train_f1: float


@dataclass
class TrainRun:
    config: TrainConfig
    history: list[EpochStats]
    model: ModelGraph


@dataclass
class DomainPair:
    """A labeled source set paired with a target set whose labels are hidden.

    ``target_y`` is stored only so that a stratified fraction of it can be
    revealed to the semi-supervised regime; the unsupervised regime never
    receives it (construct via :meth:`unsupervised`).
    """

    source_x: np.ndarray
    source_y: np.ndarray
    target_x: np.ndarray
    revealed_fraction: float = 0.0
    _target_y: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def unsupervised(cls, source_x, source_y, target_x) -> "DomainPair":
        return cls(
            np.asarray(source_x),
            np.asarray(source_y, dtype=int),
            np.asarray(target_x),
        )

    @classmethod
    def semi_supervised(
        cls, source_x, source_y, target_x, target_y, fraction: float
    ) -> "DomainPair":
        if not 0.0 < fraction <= 1.0:
            raise FractionOutOfRangeError(
                f"revealed fraction must lie in (0, 1], got {fraction}"
            )
        return cls(
            np.asarray(source_x),
            np.asarray(source_y, dtype=int),
            np.asarray(target_x),
            revealed_fraction=fraction,
            _target_y=np.asarray(target_y, dtype=int),
        )

    def reveal(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Stratified revealed subset of the target: (positions, labels)."""
        if self._target_y is None or self.revealed_fraction <= 0.0:
            raise ValueError("no target labels available to reveal")
        if self.revealed_fraction >= 1.0:
            positions = np.arange(len(self._target_y))
            return positions, self._target_y.copy()
        positions, _ = stratified_indices(self._target_y, self.revealed_fraction, seed)
        return positions, self._target_y[positions]


def _batch_stream(n: int, batch_size: int, rng):
    """Endless stream of index batches; each pass is a fresh seeded shuffle."""
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def _epoch_f1(model: ModelGraph, x, y, batch_size: int = 512) -> float:
    hits = 0
    for start in range(0, len(x), batch_size):
        probs = model.forward(x[start : start + batch_size]).class_probs
        hits += int(np.sum(np.argmax(probs, axis=1) == y[start : start + batch_size]))
    return hits / len(x)


def _object_gradients(model: ModelGraph, x_batch, y_batch):
    result, cache = model.forward_cached(x_batch)
    loss = float(cross_entropy(result.class_probs, one_hot(y_batch, model.num_classes)).mean())
    grads = model.backward(cache, class_targets=y_batch)
    return loss, grads


def _domain_gradients(model: ModelGraph, x_union, d_union):
    result, cache = model.forward_cached(x_union)
    loss = float(cross_entropy(result.domain_probs, one_hot(d_union, 2)).mean())
    grads = model.backward(cache, domain_targets=d_union)
    return loss, grads


def _apply(model: ModelGraph, group: str, grads: list | None, mu: float) -> None:
    if grads is None:
        return
    sgd_update(model.group_params(group), grads, mu)


def _finite_history(history: Sequence[EpochStats]) -> None:
    for stats in history:
        values = [stats.object_loss, stats.train_f1]
        if stats.domain_loss is not None:
            values.append(stats.domain_loss)
        if not all(math.isfinite(v) for v in values):
            raise RuntimeError(f"training diverged at epoch {stats.epoch}: {stats}")


def train_supervised(model: ModelGraph, x, y, cfg: TrainConfig) -> TrainRun:
    """Cross-entropy SGD on a labeled set; the domain head is untouched."""
    x = np.asarray(x)
    y = np.asarray(y, dtype=int)
    if len(x) == 0:
        raise EmptyDatasetError("training set is empty")
    if len(x) != len(y):
        raise ValueError("x and y lengths differ")

    rng = np.random.default_rng(cfg.seed)
    stream = _batch_stream(len(x), cfg.batch_size, rng)
    steps = math.ceil(len(x) / cfg.batch_size)
    history = []
    for epoch in range(cfg.epochs):
        losses = np.zeros(steps)
        for step in range(steps):
            batch = next(stream)
            loss, grads = _object_gradients(model, x[batch], y[batch])
            _apply(model, "feature_extractor", grads.feature_extractor, cfg.learning_rate)
            _apply(model, "object_recognizer", grads.object_recognizer, cfg.learning_rate)
            losses[step] = loss
        history.append(
            EpochStats(epoch, float(losses.mean()), None, _epoch_f1(model, x, y))
        )
    _finite_history(history)
    return TrainRun(cfg, history, model)


def _train_adversarial(model: ModelGraph, pair: DomainPair, cfg: TrainConfig) -> TrainRun:
    if not model.has_domain_head:
        raise ValueError("adversarial training requires a model with a domain head")
    if len(pair.source_x) == 0:
        raise EmptyDatasetError("source set is empty")
    if len(pair.target_x) == 0:
        raise EmptyDatasetError("target set is empty")
    model.set_grl_lambda(cfg.grl_lambda)

    source_x = np.asarray(pair.source_x)
    source_y = np.asarray(pair.source_y, dtype=int)
    target_x = np.asarray(pair.target_x)

    labeled_x, labeled_y = source_x, source_y
    revealed_stream = None
    revealed_x = revealed_y = None
    if pair.revealed_fraction > 0.0:
        revealed_idx, revealed_y = pair.reveal(cfg.seed)
        revealed_x = target_x[revealed_idx]
        labeled_x = np.concatenate([source_x, revealed_x])
        labeled_y = np.concatenate([source_y, revealed_y])
        revealed_stream = _batch_stream(
            len(revealed_idx), cfg.batch_size, np.random.default_rng([cfg.seed, 2])
        )

    source_stream = _batch_stream(
        len(source_x), cfg.batch_size, np.random.default_rng(cfg.seed)
    )
    target_stream = _batch_stream(
        len(target_x), cfg.batch_size, np.random.default_rng([cfg.seed, 1])
    )

    steps = math.ceil(len(source_x) / cfg.batch_size)
    history = []
    for epoch in range(cfg.epochs):
        object_losses = np.zeros(steps)
        domain_losses = np.zeros(steps)
        for step in range(steps):
            src = next(source_stream)
            tgt = next(target_stream)
            xb, yb = source_x[src], source_y[src]
            if revealed_stream is not None:
                rev = next(revealed_stream)
                xb = np.concatenate([xb, revealed_x[rev]])
                yb = np.concatenate([yb, revealed_y[rev]])
            object_loss, g_obj = _object_gradients(model, xb, yb)

            union = np.concatenate([source_x[src], target_x[tgt]])
            d = np.concatenate(
                [
                    np.full(len(src), DOMAIN_LABELS["source"]),
                    np.full(len(tgt), DOMAIN_LABELS["target"]),
                ]
            )
            domain_loss, g_dom = _domain_gradients(model, union, d)

            # g_dom.feature_extractor already carries the -lambda reversal, so
            # the sum realizes the combined extractor update.
            combined = [
                a + b for a, b in zip(g_obj.feature_extractor, g_dom.feature_extractor)
            ]
            _apply(model, "feature_extractor", combined, cfg.learning_rate)
            _apply(model, "object_recognizer", g_obj.object_recognizer, cfg.learning_rate)
            _apply(model, "domain_classifier", g_dom.domain_classifier, cfg.learning_rate)
            object_losses[step] = object_loss
            domain_losses[step] = domain_loss
        history.append(
            EpochStats(
                epoch,
                float(object_losses.mean()),
                float(domain_losses.mean()),
                _epoch_f1(model, labeled_x, labeled_y),
            )
        )
    _finite_history(history)
    return TrainRun(cfg, history, model)


def train_uda(model: ModelGraph, pair: DomainPair, cfg: TrainConfig) -> TrainRun:
    """Unsupervised adversarial adaptation: target labels stay hidden."""
    if pair.revealed_fraction != 0.0:
        raise ValueError(
            "unsupervised adaptation must not see target labels; "
            "use train_ssda for a revealed fraction"
        )
    return _train_adversarial(model, pair, cfg)


def train_ssda(model: ModelGraph, pair: DomainPair, cfg: TrainConfig) -> TrainRun:
    """Semi-supervised adaptation: a stratified fraction of target labels joins
    the object loss; everything else matches :func:`train_uda`."""
    if not 0.0 < pair.revealed_fraction <= 1.0:
        raise FractionOutOfRangeError(
            f"revealed fraction must lie in (0, 1], got {pair.revealed_fraction}"
        )
    return _train_adversarial(model, pair, cfg)


# -- persistence ----------------------------------------------------------------


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, Dense):
        return {
            "type": "dense",
            "shape": list(layer.weights.shape),
            "params": [float(v) for v in layer.weights.ravel()]
            + [float(v) for v in layer.bias],
        }
    if isinstance(layer, Conv1d):
        return {
            "type": "conv1d",
            "shape": list(layer.kernel.shape),
            "stride": layer.stride,
            "params": [float(v) for v in layer.kernel.ravel()]
            + [float(v) for v in layer.bias],
        }
    if isinstance(layer, Relu):
        return {"type": "relu", "shape": [], "params": []}
    if isinstance(layer, GradientReversal):
        return {"type": "grl", "shape": [], "lam": float(layer.lam), "params": []}
    raise TypeError(f"cannot serialize layer of type {type(layer).__name__}")


def _layer_from_dict(raw: dict, dtype):
    kind = raw.get("type")
    shape = tuple(raw.get("shape", ()))
    params = raw.get("params", [])
    if kind == "dense":
        count = shape[0] * shape[1]
        weights = np.array(params[:count], dtype=dtype).reshape(shape)
        bias = np.array(params[count:], dtype=dtype)
        return Dense(weights, bias)
    if kind == "conv1d":
        count = int(np.prod(shape))
        kernel = np.array(params[:count], dtype=dtype).reshape(shape)
        bias = np.array(params[count:], dtype=dtype)
        return Conv1d(kernel, bias, raw["stride"])
    if kind == "relu":
        return Relu()
    if kind == "grl":
        return GradientReversal(raw.get("lam", 1.0))
    raise CorruptCheckpointError(f"unknown layer type {kind!r}")


def save_checkpoint(model: ModelGraph, path) -> None:
    """Serialize a model to human-diffable JSON at full float precision."""
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": model.kind,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "dtype": np.dtype(model.dtype).name,
        "domain_labels": DOMAIN_LABELS,
        "labelset": list(model.labelset.names) if model.labelset else None,
        "scaler": (
            None
            if model.scaler is None
            else {
                "mean": [float(v) for v in model.scaler.mean],
                "std": [float(v) for v in model.scaler.std],
                "epsilon": model.scaler.epsilon,
            }
        ),
        "layers": [
            {"module": group, **_layer_to_dict(layer)}
            for group in GROUPS
            for layer in model.group_layers(group)
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def load_checkpoint(path) -> ModelGraph:
    """Load a checkpoint; the round trip reproduces forward outputs bit-exactly."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise CorruptCheckpointError(
                f"{path}: not valid checkpoint JSON at offset {exc.pos}"
            ) from exc
    version = payload.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise VersionMismatchError(
            f"{path}: checkpoint schema_version {version!r} is not supported "
            f"(expected {CHECKPOINT_SCHEMA_VERSION})"
        )
    try:
        dtype = np.dtype(payload["dtype"])
        groups: dict[str, list] = {group: [] for group in GROUPS}
        for raw in payload["layers"]:
            groups[raw["module"]].append(_layer_from_dict(raw, dtype))
        scaler = None
        if payload.get("scaler") is not None:
            raw_scaler = payload["scaler"]
            scaler = ScalerParams(
                np.array(raw_scaler["mean"], dtype=float),
                np.array(raw_scaler["std"], dtype=float),
                raw_scaler.get("epsilon", 1e-8),
            )
        labelset = LabelSet(payload["labelset"]) if payload.get("labelset") else None
        return ModelGraph(
            payload["kind"],
            groups["feature_extractor"],
            groups["object_recognizer"],
            groups["domain_classifier"] or None,
            input_dim=int(payload["input_dim"]),
            num_classes=int(payload["num_classes"]),
            scaler=scaler,
            labelset=labelset,
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise CorruptCheckpointError(f"{path}: malformed checkpoint ({exc})") from exc


def write_history_csv(history: Sequence[EpochStats], path) -> None:
    """Emit training history as ``epoch,object_loss,domain_loss,train_f1``."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("epoch,object_loss,domain_loss,train_f1\n")
        for stats in history:
            domain = "" if stats.domain_loss is None else repr(stats.domain_loss)
            handle.write(
                f"{stats.epoch},{stats.object_loss!r},{domain},{stats.train_f1!r}\n"
            )
