"""Per-frame statistics, feature standardization, and sliding windows.

Each radar frame is reduced to a fixed-length row of channel statistics. The
default schema is ``{mean, std, min}`` over the five point channels plus the
point count, 16 values total, laid out statistic-major::

    [mean_x..mean_noise, std_x..std_noise, min_x..min_noise, count]

Standard deviations are population (divide-by-n) throughout, so a single-point
frame yields 0 rather than NaN. Empty frames map to the all-zero row, which
preserves the row cadence that windowing assumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .datamodel import CHANNELS, FEATURE_DIM, WINDOW_ROWS, RadarFrame
from .errors import EmptyInputError, ShapeMismatchError, TooFewRowsError

#: Reducers usable in a feature schema; each maps an (n_points, 5) matrix to
#: one value per channel.
STATISTIC_REDUCERS = {
    "mean": lambda m: m.mean(axis=0),
    "std": lambda m: m.std(axis=0),
    "var": lambda m: m.var(axis=0),
    "min": lambda m: m.min(axis=0),
    "max": lambda m: m.max(axis=0),
}

DEFAULT_STATISTICS = ("mean", "std", "min")


def _check_statistics(statistics: Sequence[str]) -> tuple[str, ...]:
    statistics = tuple(statistics)
    unknown = [s for s in statistics if s not in STATISTIC_REDUCERS]
    if unknown:
        raise ValueError(
            f"unknown statistics {unknown}; available: {sorted(STATISTIC_REDUCERS)}"
        )
    return statistics


def feature_dim(statistics: Sequence[str] = DEFAULT_STATISTICS, include_count: bool = True) -> int:
    return len(CHANNELS) * len(statistics) + int(include_count)


def frame_features(
    frame: RadarFrame,
    statistics: Sequence[str] = DEFAULT_STATISTICS,
    include_count: bool = True,
) -> np.ndarray:
    """Summarize one frame's point cloud as a feature row.

    Permutation-invariant in the point list; an empty frame yields all zeros.
    """
    statistics = _check_statistics(statistics)
    dim = feature_dim(statistics, include_count)
    if not frame.points:
        return np.zeros(dim)
    matrix = np.array([point.channels() for point in frame.points], dtype=float)
    parts = [STATISTIC_REDUCERS[name](matrix) for name in statistics]
    if include_count:
        parts.append(np.array([float(len(frame.points))]))
    return np.concatenate(parts)


def recording_features(
    frames: Sequence[RadarFrame],
    statistics: Sequence[str] = DEFAULT_STATISTICS,
    include_count: bool = True,
) -> np.ndarray:
    """Stack per-frame features into an ``(n_frames, dim)`` matrix."""
    dim = feature_dim(statistics, include_count)
    if not frames:
        return np.zeros((0, dim))
    return np.stack([frame_features(f, statistics, include_count) for f in frames])


@dataclass(frozen=True)
class ScalerParams:
    """Per-column standardization parameters, fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = 1e-8

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ShapeMismatchError(
                f"mean and std must be equal-length vectors, got {mean.shape} and {std.shape}"
            )
        if np.any(std < 0):
            raise ValueError("std components must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def fit_scaler(rows, epsilon: float = 1e-8) -> ScalerParams:
    """Per-column mean and population std over a non-empty row matrix."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d row matrix, got shape {rows.shape}")
    if rows.shape[0] == 0:
        raise EmptyInputError("cannot fit a scaler on zero rows")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    # A constant column must map exactly to zero; the accumulated mean can be
    # one ulp off the common value, which the epsilon division would amplify.
    constant = (rows == rows[0]).all(axis=0)
    mean[constant] = rows[0, constant]
    std[constant] = 0.0
    return ScalerParams(mean, std, epsilon)


def apply_scaler(params: ScalerParams, rows) -> np.ndarray:
    """Standardize rows: ``(x - mean) / max(std, epsilon)`` per column.

    Accepts a single row or a matrix; columns with zero spread map to zero
    (the epsilon guard prevents division blow-up).
    """
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != params.mean.shape[0]:
        raise ShapeMismatchError(
            f"expected {params.mean.shape[0]} columns, got {rows.shape[-1]}"
        )
    return (rows - params.mean) / np.maximum(params.std, params.epsilon)


def scale_windows(params: ScalerParams, windows) -> np.ndarray:
    """Apply a row scaler to flattened windows (per-column, per-row)."""
    windows = np.asarray(windows, dtype=float)
    dim = params.mean.shape[0]
    if windows.shape[-1] % dim != 0:
        raise ShapeMismatchError(
            f"window length {windows.shape[-1]} is not a multiple of {dim}"
        )
    shape = windows.shape
    rows = windows.reshape(shape[:-1] + (-1, dim))
    return apply_scaler(params, rows).reshape(shape)


def make_windows(rows, window: int = WINDOW_ROWS, stride: int = 1) -> np.ndarray:
    """Slide a ``window``-row frame over the rows of one recording.

    Returns an ``(n_windows, window * dim)`` matrix of row-major flattened
    windows; ``n_windows = floor((N - window) / stride) + 1``. Raises
    :class:`TooFewRowsError` when fewer than ``window`` rows are available.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d row matrix, got shape {rows.shape}")
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    n, dim = rows.shape
    if n < window:
        raise TooFewRowsError(f"need at least {window} rows to form a window, got {n}")
    # sliding_window_view appends the window axis last: (n-window+1, dim, window)
    view = sliding_window_view(rows, window, axis=0)[::stride]
    return np.transpose(view, (0, 2, 1)).reshape(-1, window * dim)


def flatten_window(rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ShapeMismatchError(f"expected a (rows, dim) matrix, got shape {rows.shape}")
    return rows.reshape(-1)


def unflatten_window(flat, dim: int = FEATURE_DIM) -> np.ndarray:
    flat = np.asarray(flat, dtype=float)
    if flat.ndim != 1 or flat.shape[0] % dim != 0:
        raise ShapeMismatchError(
            f"flat window of shape {flat.shape} does not factor into rows of {dim}"
        )
    return flat.reshape(-1, dim)


class FrameStatistics(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping radar frames to statistic rows.

    Parameters
    ----------
    statistics : tuple of str
        Reducer names applied per channel, in order.
    include_count : bool
        Whether to append the point count as the final feature.
    """

    def __init__(self, statistics=DEFAULT_STATISTICS, include_count=True):
        self.statistics = statistics
        self.include_count = include_count

    def fit(self, X, y=None):
        _check_statistics(self.statistics)
        return self

    def transform(self, X):
        _check_statistics(self.statistics)
        return recording_features(list(X), self.statistics, self.include_count)


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Column standardizer with an epsilon guard for zero-spread columns."""

    def __init__(self, epsilon=1e-8):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=1)
        params = fit_scaler(X, self.epsilon)
        self.mean_ = params.mean
        self.scale_ = params.std
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        return apply_scaler(self.params_, X)

    @property
    def params_(self) -> ScalerParams:
        check_is_fitted(self, "mean_")
        return ScalerParams(self.mean_, self.scale_, self.epsilon)

    @classmethod
    def from_params(cls, params: ScalerParams) -> "FeatureScaler":
        scaler = cls(epsilon=params.epsilon)
        scaler.mean_ = params.mean
        scaler.scale_ = params.std
        scaler.n_features_in_ = params.mean.shape[0]
        return scaler


class SlidingWindows(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping one recording's rows to flat windows."""

    def __init__(self, window=WINDOW_ROWS, stride=1):
        self.window = window
        self.stride = stride

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return make_windows(X, self.window, self.stride)
