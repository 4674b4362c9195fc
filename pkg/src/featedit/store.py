"""Data model and bit-exact file I/O for feature maps, detections, ground truth.

Binary feature container (``*.feat``), all integers little-endian:

    header (24 bytes):
        magic   5 bytes  b"FEAT1"
        pad     1 byte   0x00
        version u16      1
        N       u32      sample count
        T       u32      class count
        C       u32      channels per map
        S       u32      spatial side (maps are C x S x S)
    per sample (25 + 4*C*S*S bytes):
        image_id  u32
        class_id  u32
        difficult u8     0 or 1
        box       4*f32  x1, y1, x2, y2
        values    C*S*S*f32  channel-major (channel, row, col)

Channel-major value order keeps each channel contiguous, so per-channel
statistics are a single linear scan.

CSV sidecar formats (header line required, fields in this order):

    detections:   image_id,class_id,score,x1,y1,x2,y2
    ground truth: image_id,class_id,x1,y1,x2,y2,difficult

Floats in CSV are rendered with 17 significant digits, which round-trips
IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ClassIdError,
    FormatError,
    GeometryError,
    IoError,
    ParseError,
    ShapeError,
    TruncationError,
)

_MAGIC = b"FEAT1"
_VERSION = 1
_HEADER = struct.Struct("<5sxH4I")
_SAMPLE_FIXED = struct.Struct("<IIB")

DETECTIONS_HEADER = ("image_id", "class_id", "score", "x1", "y1", "x2", "y2")
GROUND_TRUTH_HEADER = ("image_id", "class_id", "x1", "y1", "x2", "y2", "difficult")

Box = tuple[float, float, float, float]


def _f32(value: float) -> float:
    return float(np.float32(value))


def check_box(box: Sequence[float]) -> Box:
    """Validate a well-formed (x1, y1, x2, y2) box and return it as a tuple."""
    if len(box) != 4:
        raise GeometryError(f"box needs 4 coordinates, got {len(box)}")
    x1, y1, x2, y2 = (float(v) for v in box)
    if not all(np.isfinite(v) for v in (x1, y1, x2, y2)):
        raise ValueError(f"non-finite box coordinate: {box}")
    if not (x1 < x2 and y1 < y2):
        raise GeometryError(f"degenerate box (need x1 < x2 and y1 < y2): {box}")
    return (x1, y1, x2, y2)


class FeatureMap:
    """One region's C x S x S activation tensor, stored as float32."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.ascontiguousarray(values, dtype=np.float32)
        if arr.ndim != 3:
            raise ShapeError(f"feature map must be 3-d (C, S, S), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"feature map needs C >= 1 and S >= 1, got {arr.shape}")
        if arr.shape[1] != arr.shape[2]:
            raise ShapeError(f"spatial grid must be square, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature map contains non-finite values")
        self.values = arr

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def spatial(self) -> int:
        return self.values.shape[1]

    def flat(self) -> np.ndarray:
        """Channel-major flattening, length C*S*S. Returns a view."""
        return self.values.reshape(-1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"FeatureMap(C={self.channels}, S={self.spatial})"


@dataclass(eq=True)
class LabeledSample:
    """Feature map plus class label, region box, image id, difficult flag."""

    feature: FeatureMap
    class_id: int
    box: Box
    image_id: int
    difficult: bool = False

    def __post_init__(self):
        if self.class_id < 0:
            raise ClassIdError(f"class_id must be non-negative, got {self.class_id}")
        # Boxes live in the 32-bit container; coerce so round trips are exact.
        self.box = check_box(tuple(_f32(v) for v in self.box))
        self.image_id = int(self.image_id)
        self.class_id = int(self.class_id)
        self.difficult = bool(self.difficult)


@dataclass(eq=True)
class Dataset:
    """Ordered, index-addressable collection of samples with shared geometry."""

    samples: list[LabeledSample]
    num_classes: int

    def __post_init__(self):
        self.samples = list(self.samples)
        if self.num_classes < 1:
            raise ClassIdError(f"num_classes must be >= 1, got {self.num_classes}")
        for i, s in enumerate(self.samples):
            if s.class_id >= self.num_classes:
                raise ClassIdError(
                    f"sample {i}: class_id {s.class_id} >= num_classes {self.num_classes}"
                )
        if self.samples:
            c, sp = self.samples[0].feature.channels, self.samples[0].feature.spatial
            for i, s in enumerate(self.samples):
                if (s.feature.channels, s.feature.spatial) != (c, sp):
                    raise ShapeError(
                        f"sample {i} geometry ({s.feature.channels}, {s.feature.spatial})"
                        f" differs from ({c}, {sp})"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i: int) -> LabeledSample:
        return self.samples[i]

    @property
    def channels(self) -> int:
        if not self.samples:
            raise EmptyDatasetGeometry("empty dataset has no geometry")
        return self.samples[0].feature.channels

    @property
    def spatial(self) -> int:
        if not self.samples:
            raise EmptyDatasetGeometry("empty dataset has no geometry")
        return self.samples[0].feature.spatial

    def class_counts(self) -> np.ndarray:
        """Per-class sample counts N_c, length num_classes."""
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for s in self.samples:
            counts[s.class_id] += 1
        return counts

    def labels(self) -> np.ndarray:
        return np.array([s.class_id for s in self.samples], dtype=np.int64)

    def feature_matrix(self) -> np.ndarray:
        """N x D float64 matrix of channel-major flattened features."""
        if not self.samples:
            return np.zeros((0, 0))
        return np.stack([s.feature.flat() for s in self.samples]).astype(np.float64)

    def stacked_values(self) -> np.ndarray:
        """N x C x S x S float32 view-stack of all feature maps."""
        return np.stack([s.feature.values for s in self.samples])


class EmptyDatasetGeometry(ShapeError):
    """Geometry queried on a dataset with no samples."""


@dataclass(eq=True, frozen=True)
class DetectionRecord:
    """One scored box for one class in one image."""

    image_id: int
    class_id: int
    score: float
    box: Box

    def __post_init__(self):
        object.__setattr__(self, "box", check_box(self.box))
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite detection score: {self.score}")


@dataclass(eq=True, frozen=True)
class GroundTruthBox:
    """One annotated object; difficult boxes are excluded from recall counts."""

    image_id: int
    class_id: int
    box: Box
    difficult: bool = False

    def __post_init__(self):
        object.__setattr__(self, "box", check_box(self.box))


# -- binary container ---------------------------------------------------------


def write_dataset(dataset: Dataset, path) -> None:
    """Serialize a dataset to the binary container described in the module doc."""
    samples = dataset.samples
    if samples:
        c, s = dataset.channels, dataset.spatial
    else:
        c, s = 0, 0
    header = _HEADER.pack(_MAGIC, _VERSION, len(samples), dataset.num_classes, c, s)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            for sample in samples:
                fh.write(
                    _SAMPLE_FIXED.pack(sample.image_id, sample.class_id, int(sample.difficult))
                )
                fh.write(np.asarray(sample.box, dtype="<f4").tobytes())
                fh.write(sample.feature.values.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_dataset(path) -> Dataset:
    """Parse a binary container; rejects bad magic, truncation, non-finite values."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(blob) < _HEADER.size:
        if blob[: len(_MAGIC)] != _MAGIC[: len(blob)] or not blob:
            raise FormatError(f"{path}: not a feature container (bad magic)")
        raise TruncationError(f"{path}: header truncated at {len(blob)} bytes")
    magic, version, n, t, c, s = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")

    if n > 0 and (c < 1 or s < 1):
        raise FormatError(f"{path}: invalid geometry C={c}, S={s}")
    values_len = c * s * s
    sample_size = _SAMPLE_FIXED.size + 16 + 4 * values_len
    expected = _HEADER.size + n * sample_size
    if len(blob) < expected:
        raise TruncationError(
            f"{path}: expected {expected} bytes for {n} samples, file has {len(blob)}"
        )
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes after payload")

    samples = []
    offset = _HEADER.size
    for i in range(n):
        image_id, class_id, difficult = _SAMPLE_FIXED.unpack_from(blob, offset)
        offset += _SAMPLE_FIXED.size
        box = np.frombuffer(blob, dtype="<f4", count=4, offset=offset)
        offset += 16
        values = np.frombuffer(blob, dtype="<f4", count=values_len, offset=offset)
        offset += 4 * values_len
        if not np.isfinite(box).all():
            raise ValueError(f"{path}: sample {i}: non-finite box coordinate")
        if not np.isfinite(values).all():
            raise ValueError(f"{path}: sample {i}: non-finite activation value")
        if difficult not in (0, 1):
            raise FormatError(f"{path}: sample {i}: difficult flag {difficult} not 0/1")
        samples.append(
            LabeledSample(
                feature=FeatureMap(values.reshape(c, s, s)),
                class_id=class_id,
                box=tuple(float(v) for v in box),
                image_id=image_id,
                difficult=bool(difficult),
            )
        )
    return Dataset(samples=samples, num_classes=t)


# -- CSV sidecars ---------------------------------------------------------------


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def _read_csv_rows(path, header: tuple[str, ...]):
    try:
        with open(path, "r", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        return []
    if tuple(rows[0]) != header:
        raise ParseError(f"expected header {','.join(header)}, got {','.join(rows[0])}", line=1)
    return list(enumerate(rows[1:], start=2))


def write_detections(records: Iterable[DetectionRecord], path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DETECTIONS_HEADER)
            for r in records:
                writer.writerow(
                    [r.image_id, r.class_id, _format_float(r.score)]
                    + [_format_float(v) for v in r.box]
                )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_detections(path) -> list[DetectionRecord]:
    records = []
    for line_no, row in _read_csv_rows(path, DETECTIONS_HEADER):
        if len(row) != 7:
            raise ParseError(f"expected 7 fields, got {len(row)}", line=line_no)
        try:
            records.append(
                DetectionRecord(
                    image_id=int(row[0]),
                    class_id=int(row[1]),
                    score=float(row[2]),
                    box=tuple(float(v) for v in row[3:7]),
                )
            )
        except (ValueError, GeometryError) as exc:
            raise ParseError(str(exc), line=line_no) from exc
    return records


def write_ground_truth(records: Iterable[GroundTruthBox], path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GROUND_TRUTH_HEADER)
            for r in records:
                writer.writerow(
                    [r.image_id, r.class_id]
                    + [_format_float(v) for v in r.box]
                    + [int(r.difficult)]
                )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_ground_truth(path) -> list[GroundTruthBox]:
    records = []
    for line_no, row in _read_csv_rows(path, GROUND_TRUTH_HEADER):
        if len(row) != 7:
            raise ParseError(f"expected 7 fields, got {len(row)}", line=line_no)
        if row[6] not in ("0", "1"):
            raise ParseError(f"difficult flag must be 0 or 1, got {row[6]!r}", line=line_no)
        try:
            records.append(
                GroundTruthBox(
                    image_id=int(row[0]),
                    class_id=int(row[1]),
                    box=tuple(float(v) for v in row[2:6]),
                    difficult=row[6] == "1",
                )
            )
        except (ValueError, GeometryError) as exc:
            raise ParseError(str(exc), line=line_no) from exc
    return records
