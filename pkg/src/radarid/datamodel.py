"""Core domain types: point detections, radar frames, labels, and domains.

A recording is a list of :class:`RadarFrame` objects, each holding the sparse
point cloud one radar scan produced. Every point carries five scalar channels
(x, y, z position in meters, SNR and noise in dB). All types here are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import UnknownLabelError

AMBIENCES = ("sunny", "lablight", "night")
RADAR_STATES = ("static", "dynamic")

#: Per-point scalar channels, in canonical order.
CHANNELS = ("x", "y", "z", "snr", "noise")

#: Default per-frame feature vector length (see :mod:`radarid.features`).
FEATURE_DIM = 16
#: Rows per sliding window; at 10 frames/s this spans 4 seconds.
WINDOW_ROWS = 40
#: Flattened window length fed to the convolutional recognizer.
WINDOW_LENGTH = WINDOW_ROWS * FEATURE_DIM

#: Frame rate assumed when synthesizing timestamps. Windowing always counts
#: rows, never seconds, so recordings at other rates are still accepted.
FRAME_RATE_HZ = 10.0


@dataclass(frozen=True)
class PointDetection:
    """One detected reflection point.

    Finiteness of the five channels is a data invariant checked by
    :func:`validate_recording`, not enforced at construction, so that raw
    sensor output containing NaNs can still be represented and reported.
    """

    x: float
    y: float
    z: float
    snr: float
    noise: float

    def channels(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.z, self.snr, self.noise)


@dataclass(frozen=True)
class RadarFrame:
    """One radar scan: a possibly-empty point cloud plus timing metadata."""

    frame_index: int
    timestamp: float
    points: tuple[PointDetection, ...] = ()


@dataclass(frozen=True)
class ClassLabel:
    name: str
    index: int


class LabelSet:
    """Bijection between class names and indices ``0..C-1``, insertion ordered."""

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class names: {names}")
        self._names = names
        self._index = {name: i for i, name in enumerate(names)}

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[ClassLabel]:
        for i, name in enumerate(self._names):
            yield ClassLabel(name, i)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and other._names == self._names

    def __repr__(self) -> str:
        return f"LabelSet({list(self._names)!r})"

    def label_to_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownLabelError(
                f"unknown class label {name!r}; registered: {list(self._names)}"
            ) from None

    def index_to_label(self, index: int) -> ClassLabel:
        if not 0 <= index < len(self._names):
            raise IndexError(f"class index {index} outside [0, {len(self._names)})")
        return ClassLabel(self._names[index], index)

    def label(self, name: str) -> ClassLabel:
        return ClassLabel(name, self.label_to_index(name))


@dataclass(frozen=True)
class DomainTag:
    """Acquisition domain: lighting condition plus radar placement.

    ``placement`` is the radar height in inches for a static radar and the
    radar-to-object distance for a dynamic one. It is a number rather than an
    enum so synthetic experiments can sweep it.
    """

    ambience: str
    placement: float
    radar_state: str = "static"

    def __post_init__(self):
        if self.ambience not in AMBIENCES:
            raise ValueError(f"ambience must be one of {AMBIENCES}, got {self.ambience!r}")
        if self.radar_state not in RADAR_STATES:
            raise ValueError(
                f"radar_state must be one of {RADAR_STATES}, got {self.radar_state!r}"
            )
        placement = float(self.placement)
        if not (math.isfinite(placement) and placement > 0):
            raise ValueError(f"placement must be a positive number, got {self.placement!r}")
        object.__setattr__(self, "placement", placement)

    def __str__(self) -> str:
        return f"{self.ambience}({self.placement:g})"


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """A flattened window with its class and acquisition domain."""

    window: np.ndarray
    label: ClassLabel
    domain: DomainTag

    def __post_init__(self):
        window = np.asarray(self.window, dtype=float)
        if window.shape != (WINDOW_LENGTH,):
            raise ValueError(
                f"window must be a flat vector of length {WINDOW_LENGTH}, "
                f"got shape {window.shape}"
            )
        object.__setattr__(self, "window", window)


@dataclass(frozen=True)
class Finding:
    """One invariant violation discovered in a recording.

    Findings are data, not failures: an invalid recording yields a non-empty
    report rather than an exception.
    """

    position: int
    kind: str
    message: str
    field: str | None = None


def validate_recording(frames: Sequence[RadarFrame]) -> list[Finding]:
    """Check recording invariants and report every violation.

    Flags non-monotone frame indices, decreasing timestamps, and non-finite
    fields (point channels or timestamps). Pure: the same input always yields
    an identical report; an empty report means the recording is valid.
    """
    findings: list[Finding] = []
    prev_index: int | None = None
    prev_timestamp: float | None = None
    for position, frame in enumerate(frames):
        if prev_index is not None and frame.frame_index <= prev_index:
            findings.append(
                Finding(
                    position,
                    "frame-index-order",
                    f"frame_index {frame.frame_index} follows {prev_index}; "
                    "indices must be strictly increasing",
                )
            )
        prev_index = frame.frame_index

        if not math.isfinite(frame.timestamp):
            findings.append(
                Finding(
                    position,
                    "non-finite-field",
                    f"timestamp is {frame.timestamp!r}",
                    field="timestamp",
                )
            )
        else:
            if prev_timestamp is not None and frame.timestamp < prev_timestamp:
                findings.append(
                    Finding(
                        position,
                        "timestamp-order",
                        f"timestamp {frame.timestamp!r} decreases from {prev_timestamp!r}",
                    )
                )
            prev_timestamp = frame.timestamp

        for point_index, point in enumerate(frame.points):
            for field_name, value in zip(CHANNELS, point.channels()):
                if not math.isfinite(value):
                    findings.append(
                        Finding(
                            position,
                            "non-finite-field",
                            f"point {point_index}: field {field_name!r} is {value!r}",
                            field=field_name,
                        )
                    )
    return findings
