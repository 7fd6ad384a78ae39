"""On-disk dataset handling: point CSVs, manifests, and the stratified split.

Point CSV format (one file per recording)::

    frame_id,timestamp_s,point_id,x_m,y_m,z_m,snr_db,noise_db,points_count

Rows are sorted by ``(frame_id, point_id)``. An empty frame is encoded as a
single sentinel row with ``point_id=-1``, ``points_count=0`` and empty numeric
fields for x..noise. Floats are written at full ``repr`` precision, so
parse -> serialize -> parse round-trips bit-exactly.

The manifest is a JSON document::

    {"schema_version": 1,
     "entries": [{"file": "...", "class": "...", "ambience": "sunny",
                  "placement": 7, "radar_state": "static"}, ...]}
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datamodel import ClassLabel, DomainTag, LabelSet, PointDetection, RadarFrame
from .errors import (
    ClassTooSmallError,
    FractionOutOfRangeError,
    InconsistentLabelSetError,
    MalformedRowError,
    ManifestError,
    MissingFileError,
    NonNumericFieldError,
)

POINTS_CSV_COLUMNS = (
    "frame_id",
    "timestamp_s",
    "point_id",
    "x_m",
    "y_m",
    "z_m",
    "snr_db",
    "noise_db",
    "points_count",
)

MANIFEST_SCHEMA_VERSION = 1


def _parse_int(value: str, column: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise NonNumericFieldError(column, value, line) from None


def _parse_float(value: str, column: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise NonNumericFieldError(column, value, line) from None


def parse_points_csv(data) -> list[RadarFrame]:
    """Parse a point CSV into frames grouped and ordered by ``frame_id``.

    ``data`` may be bytes, a string, or a text file object. Raises
    :class:`MalformedRowError` (with the 1-based line number) for rows with
    the wrong column count and :class:`NonNumericFieldError` (naming the
    column) for fields that fail numeric parsing.
    """
    if isinstance(data, bytes):
        text = io.StringIO(data.decode("utf-8"))
    elif isinstance(data, str):
        text = io.StringIO(data)
    else:
        text = data

    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRowError("missing header", line=1) from None
    if tuple(header) != POINTS_CSV_COLUMNS:
        raise MalformedRowError(
            f"header {header!r} does not match expected columns "
            f"{list(POINTS_CSV_COLUMNS)}",
            line=1,
        )

    frames: dict[int, tuple[float, list[PointDetection]]] = {}
    for line_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(POINTS_CSV_COLUMNS):
            raise MalformedRowError(
                f"expected {len(POINTS_CSV_COLUMNS)} fields, got {len(row)}",
                line=line_number,
            )
        frame_id = _parse_int(row[0], "frame_id", line_number)
        timestamp = _parse_float(row[1], "timestamp_s", line_number)
        point_id = _parse_int(row[2], "point_id", line_number)
        points_count = _parse_int(row[8], "points_count", line_number)

        if frame_id not in frames:
            frames[frame_id] = (timestamp, [])
        if point_id == -1:
            if points_count != 0:
                raise MalformedRowError(
                    f"empty-frame sentinel must carry points_count=0, got {points_count}",
                    line=line_number,
                )
            continue
        values = [
            _parse_float(row[i], POINTS_CSV_COLUMNS[i], line_number) for i in range(3, 8)
        ]
        frames[frame_id][1].append(PointDetection(*values))

    return [
        RadarFrame(frame_id, timestamp, tuple(points))
        for frame_id, (timestamp, points) in sorted(frames.items())
    ]


def write_points_csv(frames: Sequence[RadarFrame], out) -> None:
    """Write frames in the point CSV format (inverse of :func:`parse_points_csv`)."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(POINTS_CSV_COLUMNS)
    for frame in frames:
        ts = repr(float(frame.timestamp))
        if not frame.points:
            writer.writerow([frame.frame_index, ts, -1, "", "", "", "", "", 0])
            continue
        for point_id, point in enumerate(frame.points):
            writer.writerow(
                [frame.frame_index, ts, point_id]
                + [repr(float(v)) for v in point.channels()]
                + [len(frame.points)]
            )


def points_csv_bytes(frames: Sequence[RadarFrame]) -> bytes:
    buffer = io.StringIO()
    write_points_csv(frames, buffer)
    return buffer.getvalue().encode("utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    class_name: str
    ambience: str
    placement: float
    radar_state: str

    _KEYS = ("file", "class", "ambience", "placement", "radar_state")

    @classmethod
    def from_dict(cls, raw: dict, position: int) -> "ManifestEntry":
        unknown = set(raw) - set(cls._KEYS)
        if unknown:
            raise ManifestError(f"entry {position}: unknown keys {sorted(unknown)}")
        missing = [k for k in cls._KEYS if k not in raw]
        if missing:
            raise ManifestError(f"entry {position}: missing keys {missing}")
        return cls(
            file=str(raw["file"]),
            class_name=str(raw["class"]),
            ambience=str(raw["ambience"]),
            placement=float(raw["placement"]),
            radar_state=str(raw["radar_state"]),
        )

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "class": self.class_name,
            "ambience": self.ambience,
            "placement": self.placement,
            "radar_state": self.radar_state,
        }

    def domain(self) -> DomainTag:
        return DomainTag(self.ambience, self.placement, self.radar_state)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    schema_version: int = MANIFEST_SCHEMA_VERSION

    @classmethod
    def from_dict(cls, raw: dict) -> "DatasetManifest":
        unknown = set(raw) - {"schema_version", "entries"}
        if unknown:
            raise ManifestError(f"unknown manifest keys {sorted(unknown)}")
        version = raw.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ManifestError(
                f"unsupported manifest schema_version {version!r}; "
                f"expected {MANIFEST_SCHEMA_VERSION}"
            )
        entries = raw.get("entries")
        if not isinstance(entries, list):
            raise ManifestError("manifest 'entries' must be a list")
        return cls(
            entries=tuple(
                ManifestEntry.from_dict(e, i) for i, e in enumerate(entries)
            )
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "entries": [e.to_dict() for e in self.entries],
        }


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON at offset {exc.pos}") from exc
    return DatasetManifest.from_dict(raw)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest.to_dict(), handle, indent=2)
        handle.write("\n")


@dataclass(frozen=True)
class Recording:
    """One parsed recording with its class and acquisition domain."""

    name: str
    frames: tuple[RadarFrame, ...]
    label: ClassLabel
    domain: DomainTag


@dataclass(frozen=True)
class LabeledFrameCollection:
    recordings: tuple[Recording, ...]
    labelset: LabelSet

    def domains(self) -> tuple[DomainTag, ...]:
        seen: list[DomainTag] = []
        for recording in self.recordings:
            if recording.domain not in seen:
                seen.append(recording.domain)
        return tuple(seen)

    def by_domain(self, domain: DomainTag) -> tuple[Recording, ...]:
        return tuple(r for r in self.recordings if r.domain == domain)


def assemble_dataset(manifest: DatasetManifest, root) -> LabeledFrameCollection:
    """Parse every manifest entry under ``root`` into a labeled collection.

    Class names form the label set in order of first appearance. Raises
    :class:`MissingFileError` for absent files and
    :class:`InconsistentLabelSetError` when the same file is listed with
    conflicting classes.
    """
    root = Path(root)
    file_class: dict[str, str] = {}
    names: list[str] = []
    for entry in manifest.entries:
        previous = file_class.get(entry.file)
        if previous is not None and previous != entry.class_name:
            raise InconsistentLabelSetError(
                f"file {entry.file!r} listed with conflicting classes "
                f"{previous!r} and {entry.class_name!r}"
            )
        file_class[entry.file] = entry.class_name
        if entry.class_name not in names:
            names.append(entry.class_name)
    labelset = LabelSet(names)

    recordings = []
    for entry in manifest.entries:
        path = root / entry.file
        if not path.is_file():
            raise MissingFileError(f"manifest references missing file: {path}")
        with open(path, "r", encoding="utf-8", newline="") as handle:
            frames = parse_points_csv(handle)
        recordings.append(
            Recording(
                name=entry.file,
                frames=tuple(frames),
                label=labelset.label(entry.class_name),
                domain=entry.domain(),
            )
        )
    return LabeledFrameCollection(tuple(recordings), labelset)


@dataclass(frozen=True)
class SplitResult:
    train: tuple
    test: tuple
    seed: int
    ratio: float


def _snap(value: float) -> float:
    # Absorb float representation error so e.g. 0.7 * 60 lands exactly on 42.
    nearest = round(value)
    return float(nearest) if abs(value - nearest) < 1e-9 else value


def stratified_indices(
    class_indices, ratio: float, seed: int, class_names: Sequence[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Split positions ``0..n-1`` into train/test preserving class proportions.

    Per class with ``n_c`` members the train side receives ``floor(ratio*n_c)``
    members, then the leftover slots (so the train total reaches
    ``round(ratio*n)``) go to the classes with the largest fractional parts,
    ties broken by ascending class index. Membership within a class is a
    seeded shuffle. Returns sorted ``(train, test)`` position arrays.
    """
    labels = np.asarray(class_indices, dtype=int)
    if labels.ndim != 1:
        raise ValueError("class_indices must be one-dimensional")
    if not 0.0 < ratio < 1.0:
        raise FractionOutOfRangeError(f"split ratio must lie in (0, 1), got {ratio}")

    classes = np.unique(labels)
    counts = {int(c): int(np.sum(labels == c)) for c in classes}
    for c, count in counts.items():
        if count < 2:
            name = class_names[c] if class_names is not None else str(c)
            raise ClassTooSmallError(
                f"class {name!r} has {count} example(s); need at least 2 to split"
            )

    shares = {c: _snap(ratio * n) for c, n in counts.items()}
    base = {c: int(math.floor(s)) for c, s in shares.items()}
    total_train = int(math.floor(_snap(ratio * len(labels)) + 0.5))
    leftover = total_train - sum(base.values())
    leftover = max(0, min(leftover, len(classes)))
    by_fraction = sorted(classes, key=lambda c: (-(shares[c] - base[c]), c))
    take = {int(c): base[int(c)] for c in classes}
    for c in by_fraction[:leftover]:
        take[int(c)] += 1

    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for c in classes:
        members = np.flatnonzero(labels == c)
        order = rng.permutation(len(members))
        cut = take[int(c)]
        train_parts.append(members[order[:cut]])
        test_parts.append(members[order[cut:]])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return train, test


def stratified_split(
    examples: Sequence,
    ratio: float,
    seed: int,
    class_of: Callable[[object], int] | None = None,
    class_names: Sequence[str] | None = None,
) -> SplitResult:
    """Stratified train/test split of labeled examples.

    ``class_of`` extracts the class index from an example; by default it reads
    ``example.label.index`` (works for :class:`LabeledExample` and
    :class:`Recording`).
    """
    if class_of is None:
        class_of = lambda example: example.label.index
    labels = [class_of(example) for example in examples]
    train_idx, test_idx = stratified_indices(labels, ratio, seed, class_names)
    examples = list(examples)
    return SplitResult(
        train=tuple(examples[i] for i in train_idx),
        test=tuple(examples[i] for i in test_idx),
        seed=seed,
        ratio=ratio,
    )
