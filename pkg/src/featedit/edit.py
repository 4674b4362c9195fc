"""Variance-guided channel editing.

Two drop criteria act on the per-sample, per-channel kurtosis matrix:

  * intra-class: for each class, the population variance of each channel's
    kurtosis across that class's samples. Channels with the largest share of
    the normalized variance are unstable within the class and get dropped.
  * inter-class: the variance, across class means, of each channel's mean
    kurtosis (unweighted over classes). Channels with the smallest share
    barely separate classes and get dropped.

Drop counts are fixed-cardinality: floor(intra_frac * C) intra channels per
class and floor(inter_frac * C) inter channels shared by every class. The
per-class keep mask is the complement of the union; dropping a channel zeroes
all of its units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDatasetError,
    DomainError,
    IoError,
    MissingClassError,
    ParseError,
    ShapeError,
)
from .stats import ChannelStatsMatrix, ProbabilityVector
from .store import Dataset, FeatureMap, LabeledSample


@dataclass
class EditConfig:
    """Drop fractions and the seed used by the random-edit baseline."""

    intra_frac: float = 0.20
    inter_frac: float = 0.30
    seed: int = 0

    def __post_init__(self):
        for name in ("intra_frac", "inter_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class VarianceProfile:
    """Intra/inter kurtosis-variance summaries of a labeled stats matrix."""

    intra: np.ndarray        # T x C, per-class population variance
    class_means: np.ndarray  # T x C, per-class mean kurtosis
    grand_mean: np.ndarray   # C, unweighted mean of class means
    inter: np.ndarray        # C, variance of class means around the grand mean

    @property
    def num_classes(self) -> int:
        return self.intra.shape[0]

    @property
    def num_channels(self) -> int:
        return self.intra.shape[1]


@dataclass
class EditMask:
    """Per-class binary keep/drop vector over channels."""

    class_id: int
    keep: np.ndarray
    dropped_intra: frozenset[int]
    dropped_inter: frozenset[int]

    def __post_init__(self):
        self.keep = np.asarray(self.keep, dtype=np.uint8)
        self.dropped_intra = frozenset(self.dropped_intra)
        self.dropped_inter = frozenset(self.dropped_inter)
        dropped = self.dropped_intra | self.dropped_inter
        expect = np.ones(len(self.keep), dtype=np.uint8)
        expect[sorted(dropped)] = 0
        if not np.array_equal(self.keep, expect):
            raise ValueError("keep vector inconsistent with drop sets")

    @property
    def num_channels(self) -> int:
        return len(self.keep)

    def dropped(self) -> frozenset[int]:
        return self.dropped_intra | self.dropped_inter

    def reason(self, channel: int) -> str:
        in_intra = channel in self.dropped_intra
        in_inter = channel in self.dropped_inter
        if in_intra and in_inter:
            return "both"
        if in_intra:
            return "intra"
        if in_inter:
            return "inter"
        return "kept"


def variance_profile(stats: ChannelStatsMatrix, labels, num_classes: int) -> VarianceProfile:
    """Population intra-class variances plus class-mean/inter-class summaries.

    Every class in [0, num_classes) must contribute at least one row.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (stats.num_samples,):
        raise ShapeError(
            f"{labels.shape[0] if labels.ndim else 0} labels for {stats.num_samples} rows"
        )
    k = stats.values
    t = num_classes
    c = stats.num_channels
    intra = np.zeros((t, c))
    class_means = np.zeros((t, c))
    for cls in range(t):
        rows = k[labels == cls]
        if rows.shape[0] == 0:
            raise MissingClassError(f"class {cls} has no samples")
        mean = rows.mean(axis=0)
        class_means[cls] = mean
        intra[cls] = ((rows - mean) ** 2).mean(axis=0)
    grand_mean = class_means.mean(axis=0)
    inter = ((class_means - grand_mean) ** 2).mean(axis=0)
    return VarianceProfile(
        intra=intra, class_means=class_means, grand_mean=grand_mean, inter=inter
    )


def drop_distribution(variances) -> ProbabilityVector:
    """Normalize a non-negative variance vector into drop probabilities.

    An all-zero vector yields an undefined-flagged distribution rather than
    a division by zero.
    """
    v = np.asarray(variances, dtype=np.float64)
    if (v < 0).any() or not np.isfinite(v).all():
        raise DomainError("variances must be finite and non-negative")
    total = float(v.sum())
    if total == 0.0:
        return ProbabilityVector(entries=np.zeros_like(v), undefined=True)
    return ProbabilityVector(entries=v / total)


def _top_indices(values: np.ndarray, count: int, largest: bool) -> frozenset[int]:
    # Full sort with index tie-break: equal values resolve to the lower index.
    key = -values if largest else values
    order = sorted(range(len(values)), key=lambda i: (key[i], i))
    return frozenset(order[:count])


def build_mask(profile: VarianceProfile, class_id: int, cfg: EditConfig) -> EditMask:
    """Select drop channels for one class and assemble its keep mask.

    Intra drops take the floor(intra_frac*C) largest normalized intra-class
    variances for the class; inter drops take the floor(inter_frac*C) smallest
    normalized inter-class variances. A criterion whose variances are all zero
    contributes nothing; if both are all-zero the dataset carries no signal.
    """
    if not 0 <= class_id < profile.num_classes:
        raise MissingClassError(
            f"class_id {class_id} outside [0, {profile.num_classes})"
        )
    c = profile.num_channels
    n_intra = int(cfg.intra_frac * c)
    n_inter = int(cfg.inter_frac * c)

    p_intra = drop_distribution(profile.intra[class_id])
    p_inter = drop_distribution(profile.inter)
    if p_intra.undefined and p_inter.undefined:
        raise DegenerateDatasetError(
            "all intra- and inter-class variances are zero; no channels can be ranked"
        )

    dropped_intra = (
        frozenset() if p_intra.undefined else _top_indices(p_intra.entries, n_intra, largest=True)
    )
    dropped_inter = (
        frozenset() if p_inter.undefined else _top_indices(p_inter.entries, n_inter, largest=False)
    )
    keep = np.ones(c, dtype=np.uint8)
    keep[sorted(dropped_intra | dropped_inter)] = 0
    return EditMask(
        class_id=class_id,
        keep=keep,
        dropped_intra=dropped_intra,
        dropped_inter=dropped_inter,
    )


def build_all_masks(profile: VarianceProfile, cfg: EditConfig) -> list[EditMask]:
    """One mask per class; the inter drop set is shared across all of them."""
    return [build_mask(profile, cls, cfg) for cls in range(profile.num_classes)]


def apply_mask(fmap: FeatureMap, mask: EditMask) -> FeatureMap:
    """Zero every unit of dropped channels; kept channels are bit-identical."""
    if mask.num_channels != fmap.channels:
        raise ShapeError(
            f"mask over {mask.num_channels} channels applied to {fmap.channels}-channel map"
        )
    values = fmap.values.copy()
    values[mask.keep == 0] = 0.0
    return FeatureMap(values)


def random_edit(fmap: FeatureMap, drop_ratio: float, rng: np.random.Generator) -> FeatureMap:
    """Zero a uniformly random set of individual units, not whole channels.

    With k = C*S*S units, exactly floor(k * drop_ratio / (1 + drop_ratio))
    positions are zeroed, so the zero/one ratio of the implicit binary mask
    equals drop_ratio up to flooring.
    """
    if not 0.0 <= drop_ratio < 1.0:
        raise DomainError(f"drop_ratio must lie in [0, 1), got {drop_ratio}")
    k = fmap.values.size
    n_zero = int(k * drop_ratio / (1.0 + drop_ratio))
    flat = fmap.values.copy().reshape(-1)
    if n_zero > 0:
        positions = rng.choice(k, size=n_zero, replace=False)
        flat[positions] = 0.0
    return FeatureMap(flat.reshape(fmap.values.shape))


def edit_dataset(dataset: Dataset, masks) -> Dataset:
    """Apply each sample's own-class mask; labels, boxes and ids unchanged."""
    by_class = {m.class_id: m for m in masks}
    missing = [cls for cls in range(dataset.num_classes) if cls not in by_class]
    if missing:
        raise MissingClassError(f"no mask for classes {missing}")
    edited = [
        LabeledSample(
            feature=apply_mask(s.feature, by_class[s.class_id]),
            class_id=s.class_id,
            box=s.box,
            image_id=s.image_id,
            difficult=s.difficult,
        )
        for s in dataset
    ]
    return Dataset(samples=edited, num_classes=dataset.num_classes)


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Concatenate two datasets, a's samples first."""
    if a.num_classes != b.num_classes:
        raise ShapeError(
            f"class counts differ: {a.num_classes} vs {b.num_classes}"
        )
    if len(a) > 0 and len(b) > 0:
        if (a.channels, a.spatial) != (b.channels, b.spatial):
            raise ShapeError(
                f"geometry differs: ({a.channels}, {a.spatial})"
                f" vs ({b.channels}, {b.spatial})"
            )
    return Dataset(samples=list(a.samples) + list(b.samples), num_classes=a.num_classes)


# -- mask CSV ------------------------------------------------------------------


def write_masks_csv(masks, path) -> None:
    """Export `class_id,channel,keep,reason` rows, reason in {kept,intra,inter,both}."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_id", "channel", "keep", "reason"])
            for mask in masks:
                for i in range(mask.num_channels):
                    writer.writerow([mask.class_id, i, int(mask.keep[i]), mask.reason(i)])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_masks_csv(path) -> list[EditMask]:
    """Rebuild EditMask objects from a write_masks_csv export."""
    try:
        with open(path, "r", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["class_id", "channel", "keep", "reason"]:
        raise ParseError("expected header class_id,channel,keep,reason", line=1)

    per_class: dict[int, dict[int, str]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", line=line_no)
        try:
            cls, channel, keep = int(row[0]), int(row[1]), int(row[2])
        except ValueError as exc:
            raise ParseError(str(exc), line=line_no) from exc
        reason = row[3]
        if reason not in ("kept", "intra", "inter", "both"):
            raise ParseError(f"unknown reason {reason!r}", line=line_no)
        if (keep == 1) != (reason == "kept"):
            raise ParseError(f"keep={keep} inconsistent with reason={reason}", line=line_no)
        per_class.setdefault(cls, {})[channel] = reason

    masks = []
    for cls in sorted(per_class):
        channels = per_class[cls]
        c = max(channels) + 1
        if sorted(channels) != list(range(c)):
            raise ParseError(f"class {cls}: channel rows are not a dense 0..{c - 1} range")
        dropped_intra = frozenset(i for i, r in channels.items() if r in ("intra", "both"))
        dropped_inter = frozenset(i for i, r in channels.items() if r in ("inter", "both"))
        keep = np.ones(c, dtype=np.uint8)
        keep[sorted(dropped_intra | dropped_inter)] = 0
        masks.append(
            EditMask(
                class_id=cls,
                keep=keep,
                dropped_intra=dropped_intra,
                dropped_inter=dropped_inter,
            )
        )
    return masks
