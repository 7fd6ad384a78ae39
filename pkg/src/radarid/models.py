"""Recognizer architectures: the fully connected baseline and the 1-D CNN.

Both models share the same three-part layout: a feature extractor producing
an embedding, an object-recognizer head mapping embeddings to class
probabilities, and an optional adversarial domain-classifier head entered
through a gradient-reversal layer. Every parameter belongs to exactly one
part, which is what lets the three training updates touch disjoint sets.

The CNN follows the published hyper-parameters: three single-channel
convolutions (kernel 20, stride 2) take a 640-long input through lengths
311 -> 146 -> 64; the recognizer head is 64 -> 32 -> 16 -> C and the domain
head 64 -> 32 -> 2. These shapes are asserted at build time.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import LabelSet
from .errors import ShapeMismatchError
from .features import ScalerParams
from .neuralnet import (
    Conv1d,
    Dense,
    GradientReversal,
    Relu,
    conv_output_length,
    cross_entropy,
    max_relative_error,
    one_hot,
    softmax,
    softmax_cross_entropy_grad,
)

GROUPS = ("feature_extractor", "object_recognizer", "domain_classifier")

CNN_INPUT_LENGTH = 640
CNN_KERNEL_SIZE = 20
CNN_STRIDE = 2
CNN_CONV_LENGTHS = (311, 146, 64)


@dataclass
class ForwardResult:
    class_probs: np.ndarray
    domain_probs: np.ndarray | None
    features: np.ndarray


@dataclass
class Gradients:
    """Per-group gradient lists aligned with ``ModelGraph.group_params``.

    A group is ``None`` when no loss flowed into it, which is itself an
    invariant worth asserting: the object loss never reaches the domain head
    and vice versa.
    """

    feature_extractor: list | None = None
    object_recognizer: list | None = None
    domain_classifier: list | None = None

    def get(self, group):
        return getattr(self, group)


@dataclass
class _Cache:
    batch: int
    single: bool
    trunk_inputs: list
    trunk_shape: tuple
    features: np.ndarray
    recognizer_inputs: list
    class_probs: np.ndarray
    domain_inputs: list | None
    domain_probs: np.ndarray | None


def _forward_layers(layers, x):
    inputs = []
    for layer in layers:
        inputs.append(x)
        x = layer.forward(x)
    return x, inputs


def _backward_layers(layers, inputs, upstream):
    per_layer = []
    for layer, x in zip(reversed(layers), reversed(inputs)):
        param_grads, upstream = layer.backward(x, upstream)
        per_layer.append(param_grads)
    flat = [g for grads in reversed(per_layer) for g in grads]
    return flat, upstream


class ModelGraph:
    """A parameterized recognizer network with explicit forward/backward."""

    def __init__(
        self,
        kind: str,
        feature_extractor: Sequence,
        object_recognizer: Sequence,
        domain_classifier: Sequence | None = None,
        *,
        input_dim: int,
        num_classes: int,
        scaler: ScalerParams | None = None,
        labelset: LabelSet | None = None,
    ):
        if kind not in ("fcl", "cnn"):
            raise ValueError(f"kind must be 'fcl' or 'cnn', got {kind!r}")
        self.kind = kind
        self.feature_extractor = list(feature_extractor)
        self.object_recognizer = list(object_recognizer)
        self.domain_classifier = list(domain_classifier) if domain_classifier else None
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.scaler = scaler
        self.labelset = labelset

    # -- parameter bookkeeping -------------------------------------------------

    def group_layers(self, group: str):
        if group == "feature_extractor":
            return self.feature_extractor
        if group == "object_recognizer":
            return self.object_recognizer
        if group == "domain_classifier":
            return self.domain_classifier or []
        raise KeyError(group)

    def group_params(self, group: str) -> list:
        return [p for layer in self.group_layers(group) for p in layer.params()]

    def group_param_count(self, group: str) -> int:
        return sum(p.size for p in self.group_params(group))

    def param_count(self) -> int:
        return sum(self.group_param_count(g) for g in GROUPS)

    @property
    def has_domain_head(self) -> bool:
        return self.domain_classifier is not None

    @property
    def grl_lambda(self) -> float:
        for layer in self.group_layers("domain_classifier"):
            if isinstance(layer, GradientReversal):
                return layer.lam
        raise ValueError("model has no gradient-reversal layer")

    def set_grl_lambda(self, lam: float) -> None:
        for layer in self.group_layers("domain_classifier"):
            if isinstance(layer, GradientReversal):
                layer.lam = lam
                return
        raise ValueError("model has no gradient-reversal layer")

    @property
    def dtype(self):
        for group in GROUPS:
            for p in self.group_params(group):
                return p.dtype
        return np.dtype(np.float64)

    def to_dtype(self, dtype) -> "ModelGraph":
        """A deep copy with every parameter cast to ``dtype``."""
        clone = copy.deepcopy(self)
        for group in GROUPS:
            for layer in clone.group_layers(group):
                if isinstance(layer, Dense):
                    layer.weights = layer.weights.astype(dtype)
                    layer.bias = layer.bias.astype(dtype)
                elif isinstance(layer, Conv1d):
                    layer.kernel = layer.kernel.astype(dtype)
                    layer.bias = layer.bias.astype(dtype)
        return clone

    # -- forward / backward ----------------------------------------------------

    def _prepare_input(self, x):
        x = np.asarray(x)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ShapeMismatchError(
                f"expected input of length {self.input_dim}, got shape {x.shape}"
            )
        return batch.astype(self.dtype, copy=False), single

    def forward_cached(self, x) -> tuple[ForwardResult, _Cache]:
        batch, single = self._prepare_input(x)
        trunk_in = batch[:, None, :] if self.kind == "cnn" else batch
        trunk_out, trunk_inputs = _forward_layers(self.feature_extractor, trunk_in)
        features = trunk_out.reshape(trunk_out.shape[0], -1)

        logits, recognizer_inputs = _forward_layers(self.object_recognizer, features)
        class_probs = softmax(logits)

        domain_inputs = None
        domain_probs = None
        if self.domain_classifier is not None:
            domain_logits, domain_inputs = _forward_layers(self.domain_classifier, features)
            domain_probs = softmax(domain_logits)

        cache = _Cache(
            batch=batch.shape[0],
            single=single,
            trunk_inputs=trunk_inputs,
            trunk_shape=trunk_out.shape,
            features=features,
            recognizer_inputs=recognizer_inputs,
            class_probs=class_probs,
            domain_inputs=domain_inputs,
            domain_probs=domain_probs,
        )
        result = ForwardResult(
            class_probs=class_probs[0] if single else class_probs,
            domain_probs=(
                None if domain_probs is None else (domain_probs[0] if single else domain_probs)
            ),
            features=features[0] if single else features,
        )
        return result, cache

    def forward(self, x) -> ForwardResult:
        result, _ = self.forward_cached(x)
        return result

    def backward(self, cache: _Cache, class_targets=None, domain_targets=None) -> Gradients:
        """Gradients of the mean batch losses with respect to every parameter.

        ``class_targets`` drives the object path (cross-entropy over the
        recognizer softmax, mean over the batch); ``domain_targets`` drives
        the domain path through the gradient-reversal layer. Either may be
        omitted; at least one is required.
        """
        if class_targets is None and domain_targets is None:
            raise ValueError("nothing to backpropagate: no targets given")
        grads = Gradients()
        feature_grad = np.zeros_like(cache.features)

        if class_targets is not None:
            targets = one_hot(class_targets, self.num_classes, dtype=cache.class_probs.dtype)
            if targets.shape != cache.class_probs.shape:
                raise ShapeMismatchError(
                    f"class targets shape {targets.shape} does not match "
                    f"probabilities {cache.class_probs.shape}"
                )
            upstream = softmax_cross_entropy_grad(cache.class_probs, targets) / cache.batch
            flat, grad_feat = _backward_layers(
                self.object_recognizer, cache.recognizer_inputs, upstream
            )
            grads.object_recognizer = flat
            feature_grad += grad_feat

        if domain_targets is not None:
            if self.domain_classifier is None:
                raise ValueError("model has no domain-classifier head")
            targets = one_hot(domain_targets, 2, dtype=cache.domain_probs.dtype)
            upstream = softmax_cross_entropy_grad(cache.domain_probs, targets) / cache.batch
            flat, grad_feat = _backward_layers(
                self.domain_classifier, cache.domain_inputs, upstream
            )
            grads.domain_classifier = flat
            feature_grad += grad_feat

        trunk_upstream = feature_grad.reshape(cache.trunk_shape)
        flat, _ = _backward_layers(self.feature_extractor, cache.trunk_inputs, trunk_upstream)
        grads.feature_extractor = flat
        return grads


def build_fcl(
    input_dim: int,
    num_classes: int,
    seed: int,
    *,
    hidden_units: int = 16,
    with_domain_head: bool = False,
    grl_lambda: float = 1.0,
    scaler: ScalerParams | None = None,
    labelset: LabelSet | None = None,
    dtype=np.float32,
) -> ModelGraph:
    """Three-layer fully connected recognizer on per-frame feature rows.

    The first two dense layers (each ``hidden_units`` wide, ReLU) form the
    feature extractor; the final dense + softmax layer is the recognizer
    head. The split lets the adversarial training regimes run on this model
    too, even though only the CNN uses them by default.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be at least 1")
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    rng = np.random.default_rng(seed)
    extractor = [
        Dense.init(rng, input_dim, hidden_units, dtype),
        Relu(),
        Dense.init(rng, hidden_units, hidden_units, dtype),
        Relu(),
    ]
    recognizer = [Dense.init(rng, hidden_units, num_classes, dtype)]
    domain = None
    if with_domain_head:
        domain = [
            GradientReversal(grl_lambda),
            Dense.init(rng, hidden_units, hidden_units, dtype),
            Relu(),
            Dense.init(rng, hidden_units, 2, dtype),
        ]
    return ModelGraph(
        "fcl",
        extractor,
        recognizer,
        domain,
        input_dim=input_dim,
        num_classes=num_classes,
        scaler=scaler,
        labelset=labelset,
    )


def build_cnn(
    num_classes: int,
    seed: int,
    *,
    input_length: int = CNN_INPUT_LENGTH,
    kernel_size: int = CNN_KERNEL_SIZE,
    stride: int = CNN_STRIDE,
    conv_channels: Sequence[int] = (1, 1, 1),
    recognizer_units: Sequence[int] = (32, 16),
    domain_units: Sequence[int] = (32,),
    with_domain_head: bool = True,
    grl_lambda: float = 1.0,
    scaler: ScalerParams | None = None,
    labelset: LabelSet | None = None,
    dtype=np.float32,
) -> ModelGraph:
    """1-D CNN recognizer over flattened windows, with optional domain head."""
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    rng = np.random.default_rng(seed)

    lengths = []
    length = input_length
    extractor = []
    in_channels = 1
    for out_channels in conv_channels:
        length = conv_output_length(length, kernel_size, stride)
        lengths.append(length)
        extractor.append(Conv1d.init(rng, in_channels, out_channels, kernel_size, stride, dtype))
        extractor.append(Relu())
        in_channels = out_channels

    if (input_length, kernel_size, stride, len(tuple(conv_channels))) == (
        CNN_INPUT_LENGTH,
        CNN_KERNEL_SIZE,
        CNN_STRIDE,
        3,
    ):
        if tuple(lengths) != CNN_CONV_LENGTHS:
            raise AssertionError(
                f"conv output lengths {lengths} do not match the published "
                f"architecture {CNN_CONV_LENGTHS}"
            )

    embedding_dim = in_channels * length
    recognizer = []
    fan_in = embedding_dim
    for units in recognizer_units:
        recognizer.append(Dense.init(rng, fan_in, units, dtype))
        recognizer.append(Relu())
        fan_in = units
    recognizer.append(Dense.init(rng, fan_in, num_classes, dtype))

    domain = None
    if with_domain_head:
        domain = [GradientReversal(grl_lambda)]
        fan_in = embedding_dim
        for units in domain_units:
            domain.append(Dense.init(rng, fan_in, units, dtype))
            domain.append(Relu())
            fan_in = units
        domain.append(Dense.init(rng, fan_in, 2, dtype))

    return ModelGraph(
        "cnn",
        extractor,
        recognizer,
        domain,
        input_dim=input_length,
        num_classes=num_classes,
        scaler=scaler,
        labelset=labelset,
    )


def conv_lengths(model: ModelGraph) -> tuple[int, ...]:
    """Chained convolution output lengths of a CNN's feature extractor."""
    lengths = []
    length = model.input_dim
    for layer in model.feature_extractor:
        if isinstance(layer, Conv1d):
            length = conv_output_length(length, layer.kernel_size, layer.stride)
            lengths.append(length)
    return tuple(lengths)


def head_widths(model: ModelGraph, group: str) -> tuple[int, ...]:
    """Unit widths of a dense head, input width included (e.g. 64, 32, 16, 5)."""
    dense = [layer for layer in model.group_layers(group) if isinstance(layer, Dense)]
    if not dense:
        return ()
    return (dense[0].fan_in,) + tuple(layer.fan_out for layer in dense)


def gradient_check(
    model: ModelGraph, x, class_target, domain_target=None, eps: float = 1e-5
) -> float:
    """Cross-check analytic gradients against central finite differences.

    Runs in double precision on a copy of the model. For each parameter the
    object and domain losses are differenced separately and combined with the
    gradient-reversal rule (the domain path contributes ``-lam`` of its raw
    gradient to the feature extractor), because the reversed update is not
    the gradient of any single scalar loss. Returns the maximum relative
    error ``|a - n| / max(|a|, |n|, 1e-8)`` over all parameters.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    graph = model.to_dtype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    batch = x[None, :] if x.ndim == 1 else x
    class_targets = np.atleast_1d(np.asarray(class_target, dtype=int))
    class_onehot = one_hot(class_targets, graph.num_classes)
    check_domain = domain_target is not None
    if check_domain:
        if not graph.has_domain_head:
            raise ValueError("domain_target given but model has no domain head")
        domain_targets = np.atleast_1d(np.asarray(domain_target, dtype=int))
        domain_onehot = one_hot(domain_targets, 2)
        lam = graph.grl_lambda

    _, cache = graph.forward_cached(batch)
    analytic = graph.backward(
        cache,
        class_targets=class_targets,
        domain_targets=domain_targets if check_domain else None,
    )

    def object_loss():
        return float(cross_entropy(graph.forward(batch).class_probs, class_onehot).mean())

    def domain_loss():
        return float(cross_entropy(graph.forward(batch).domain_probs, domain_onehot).mean())

    worst = 0.0
    for group in GROUPS:
        params = graph.group_params(group)
        if not params:
            continue
        if group == "domain_classifier" and not check_domain:
            continue
        analytic_group = analytic.get(group) or [np.zeros_like(p) for p in params]
        for param, analytic_grad in zip(params, analytic_group):
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + eps
                obj_plus = object_loss()
                dom_plus = domain_loss() if check_domain else 0.0
                param[index] = original - eps
                obj_minus = object_loss()
                dom_minus = domain_loss() if check_domain else 0.0
                param[index] = original

                numeric_obj = (obj_plus - obj_minus) / (2 * eps)
                numeric_dom = (dom_plus - dom_minus) / (2 * eps)
                if group == "feature_extractor" and check_domain:
                    expected = numeric_obj - lam * numeric_dom
                elif group == "domain_classifier":
                    expected = numeric_dom
                else:
                    expected = numeric_obj
                worst = max(
                    worst, max_relative_error(analytic_grad[index], expected)
                )
    return worst
