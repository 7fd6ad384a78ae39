"""Minimal differentiable-layer engine with explicit backward passes.

Layers operate on batches: dense layers on ``(batch, features)`` arrays, 1-D
convolutions on ``(batch, channels, length)``. Single examples (one dimension
less) are accepted and returned in kind. Every ``backward`` returns exact
analytic gradients; the finite-difference helpers at the bottom exist to
cross-check them.

Conventions, fixed here once:

* Convolution is cross-correlation (no kernel flip) with valid padding.
* ReLU's subgradient at exactly 0 is 0.
* Probabilities are clamped at ``PROB_FLOOR`` before any log.
* Parameters initialize uniformly in ``+-sqrt(6 / (fan_in + fan_out))``
  with zero biases, from the run seed.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputShorterThanKernelError, ShapeMismatchError

PROB_FLOOR = 1e-12


def conv_output_length(length: int, kernel: int, stride: int) -> int:
    """Output length of a valid-padding convolution: floor((L-K)/S) + 1."""
    if kernel < 1 or stride < 1:
        raise ValueError("kernel and stride must be positive")
    if length < kernel:
        raise InputShorterThanKernelError(
            f"input length {length} is shorter than kernel {kernel}"
        )
    return (length - kernel) // stride + 1


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense:
    """Affine layer ``y = x @ W.T + b`` with ``W`` shaped (fan_out, fan_in)."""

    def __init__(self, weights, bias):
        weights = np.asarray(weights)
        bias = np.asarray(bias)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ShapeMismatchError(
                f"weights {weights.shape} and bias {bias.shape} are inconsistent"
            )
        self.weights = weights
        self.bias = bias

    @classmethod
    def init(cls, rng, fan_in, fan_out, dtype=np.float32):
        weights = glorot_uniform(rng, (fan_out, fan_in), fan_in, fan_out, dtype)
        return cls(weights, np.zeros(fan_out, dtype=dtype))

    @property
    def fan_in(self):
        return self.weights.shape[1]

    @property
    def fan_out(self):
        return self.weights.shape[0]

    def params(self):
        return [self.weights, self.bias]

    def _check(self, x):
        x = np.asarray(x)
        if x.shape[-1] != self.fan_in:
            raise ShapeMismatchError(
                f"dense layer expects {self.fan_in} input features, got {x.shape[-1]}"
            )
        return x

    def forward(self, x):
        x = self._check(x)
        return x @ self.weights.T + self.bias

    def backward(self, x, upstream):
        x = self._check(x)
        upstream = np.asarray(upstream)
        if upstream.shape[-1] != self.fan_out:
            raise ShapeMismatchError(
                f"upstream expects {self.fan_out} features, got {upstream.shape[-1]}"
            )
        xb = np.atleast_2d(x)
        ub = np.atleast_2d(upstream)
        grad_w = ub.T @ xb
        grad_b = ub.sum(axis=0)
        grad_x = upstream @ self.weights
        return [grad_w, grad_b], grad_x


class Conv1d:
    """Single- or multi-channel 1-D cross-correlation, valid padding.

    ``kernel`` is shaped (out_channels, in_channels, K); a bare length-K
    vector is promoted to (1, 1, K). Batched input is (batch, in_channels, L);
    a 1-D input is treated as one single-channel example and the output
    squeezed back to 1-D when the layer has one filter.
    """

    def __init__(self, kernel, bias, stride=1):
        kernel = np.asarray(kernel)
        if kernel.ndim == 1:
            kernel = kernel[None, None, :]
        if kernel.ndim != 3:
            raise ShapeMismatchError(f"kernel must be 1-d or 3-d, got shape {kernel.shape}")
        bias = np.atleast_1d(np.asarray(bias, dtype=kernel.dtype))
        if bias.shape != (kernel.shape[0],):
            raise ShapeMismatchError(
                f"bias shape {bias.shape} does not match {kernel.shape[0]} filters"
            )
        if stride < 1:
            raise ValueError("stride must be positive")
        self.kernel = kernel
        self.bias = bias
        self.stride = stride

    @classmethod
    def init(cls, rng, in_channels, out_channels, kernel_size, stride, dtype=np.float32):
        fan_in = in_channels * kernel_size
        fan_out = out_channels * kernel_size
        kernel = glorot_uniform(
            rng, (out_channels, in_channels, kernel_size), fan_in, fan_out, dtype
        )
        # Slightly positive bias: with a single shared kernel per layer, a
        # zero-bias trunk can drive an entire class's activations into the
        # ReLU dead zone and freeze there; 0.1 keeps the escape route open.
        bias = np.full(out_channels, 0.1, dtype=dtype)
        return cls(kernel, bias, stride)

    @property
    def kernel_size(self):
        return self.kernel.shape[2]

    def params(self):
        return [self.kernel, self.bias]

    def _as_batch(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return x[None, None, :], True
        if x.ndim == 3:
            if x.shape[1] != self.kernel.shape[1]:
                raise ShapeMismatchError(
                    f"expected {self.kernel.shape[1]} input channels, got {x.shape[1]}"
                )
            return x, False
        raise ShapeMismatchError(f"conv input must be 1-d or 3-d, got shape {x.shape}")

    def _windows(self, x3):
        length = x3.shape[2]
        if length < self.kernel_size:
            raise InputShorterThanKernelError(
                f"input length {length} is shorter than kernel {self.kernel_size}"
            )
        # (batch, in_channels, out_length, K)
        return sliding_window_view(x3, self.kernel_size, axis=2)[:, :, :: self.stride, :]

    def forward(self, x):
        x3, single = self._as_batch(x)
        windows = self._windows(x3)
        y = np.einsum("biok,cik->bco", windows, self.kernel) + self.bias[:, None]
        if single and y.shape[1] == 1:
            return y[0, 0]
        return y

    def backward(self, x, upstream):
        x3, single = self._as_batch(x)
        upstream = np.asarray(upstream)
        up3 = upstream[None, None, :] if single and upstream.ndim == 1 else upstream
        windows = self._windows(x3)
        out_length = windows.shape[2]
        if up3.shape != (x3.shape[0], self.kernel.shape[0], out_length):
            raise ShapeMismatchError(
                f"upstream shape {up3.shape} does not match output "
                f"{(x3.shape[0], self.kernel.shape[0], out_length)}"
            )
        grad_kernel = np.einsum("bco,biok->cik", up3, windows)
        grad_bias = up3.sum(axis=(0, 2))
        grad_x = np.zeros_like(x3)
        for k in range(self.kernel_size):
            segment = grad_x[:, :, k : k + self.stride * out_length : self.stride]
            segment += np.einsum("bco,ci->bio", up3, self.kernel[:, :, k])
        if single and upstream.ndim == 1:
            grad_x = grad_x[0, 0]
        return [grad_kernel, grad_bias], grad_x


class Relu:
    def params(self):
        return []

    def forward(self, x):
        return np.maximum(np.asarray(x), 0)

    def backward(self, x, upstream):
        return [], np.asarray(upstream) * (np.asarray(x) > 0)


class GradientReversal:
    """Identity forward; backward returns ``-lam * upstream``.

    Placed at the entry of the domain classifier, it makes the shared trunk
    descend the object loss while ascending the domain loss, which is exactly
    the combined feature-extractor update the adversarial scheme prescribes.
    """

    def __init__(self, lam=1.0):
        if lam < 0:
            raise ValueError("lam must be non-negative")
        self.lam = lam

    def params(self):
        return []

    def forward(self, x):
        return x

    def backward(self, x, upstream):
        return [], -self.lam * np.asarray(upstream)


def softmax(logits):
    """Numerically stable softmax along the last axis."""
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def one_hot(indices, num_classes, dtype=float):
    indices = np.asarray(indices, dtype=int)
    out = np.zeros(indices.shape + (num_classes,), dtype=dtype)
    np.put_along_axis(out, indices[..., None], 1, axis=-1)
    return out


def cross_entropy(probs, targets):
    """Categorical cross-entropy ``-sum_i t_i * log(p_i)`` per example.

    Probabilities are clamped at ``PROB_FLOOR`` before the log, so a
    vanishing true-class probability yields ``-log(1e-12)`` instead of inf.
    Accumulates in double precision regardless of input dtype.
    """
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise ShapeMismatchError(
            f"probs shape {probs.shape} does not match targets {targets.shape}"
        )
    return -(targets * np.log(np.maximum(probs, PROB_FLOOR))).sum(axis=-1)


def softmax_cross_entropy_grad(probs, targets):
    """d(cross-entropy o softmax)/d(logits) per example: ``p - t``."""
    return np.asarray(probs) - np.asarray(targets)


def sgd_step(param, grad, mu):
    """One plain gradient-descent update ``theta - mu * grad`` (pure)."""
    param = np.asarray(param, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if param.shape != grad.shape:
        raise ShapeMismatchError(
            f"param shape {param.shape} does not match grad {grad.shape}"
        )
    return param - mu * grad


def sgd_update(params, grads, mu):
    """Apply ``theta -= mu * grad`` in place to matched parameter arrays."""
    if len(params) != len(grads):
        raise ShapeMismatchError(
            f"{len(params)} parameter arrays but {len(grads)} gradients"
        )
    for param, grad in zip(params, grads):
        if param.shape != grad.shape:
            raise ShapeMismatchError(
                f"param shape {param.shape} does not match grad {grad.shape}"
            )
        param -= (mu * grad).astype(param.dtype, copy=False)


def max_relative_error(analytic, numeric, floor=1e-8):
    """max |a - n| / max(|a|, |n|, floor) over all elements; 0 when empty."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
