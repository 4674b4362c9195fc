"""Seeded synthetic feature-map generator with planted channel semantics.

Channel roles control the shape of each channel's unit distribution, so the
per-channel kurtosis statistic is exactly the signal that separates them:

  * friendly channels draw units from a fixed two-parameter mixture of a
    peaked (Laplace) and a flat (uniform) component; the mixing weight is
    pinned per (class, channel) and spread across classes, so their kurtosis
    is stable within a class and distinct between classes.
  * noisy channels flip a class-biased coin per sample between a one-spike
    shape (kurtosis around +30) and a flat shape (kurtosis around -1.2),
    giving a huge intra-class kurtosis variance. The coin bias is shifted at
    test time by `shift`, modeling train/test drift on exactly these channels.
  * flat channels reuse one mixture shared by every class, so the
    inter-class variance of their mean kurtosis is pure estimation noise.

A well-behaved edit pass should therefore drop noisy channels by the
intra-class criterion and flat channels by the inter-class criterion while
leaving friendly channels mostly alone.

Linear class signal rides on top as per-channel mean offsets, which leave
every kurtosis statistic untouched (kurtosis is shift-invariant): friendly
channels carry a stable class signature, noisy channels carry a stronger
signature that rotates toward the next class's at test time with weight
`shift` (so classifiers leaning on them degrade under drift), and flat
channels carry none.

Every sample draws from its own rng stream derived from (seed, split,
class, index), so generation is order-independent and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError
from .store import Dataset, FeatureMap, GroundTruthBox, LabeledSample

_SAMPLES_PER_IMAGE = 4
_CELL = 40.0
_BOX_STREAM = 7


def _default_noisy() -> tuple[frozenset[int], ...]:
    return tuple(frozenset({0, 1, 2, 3}) for _ in range(3))


def _default_flat() -> frozenset[int]:
    return frozenset(range(4, 14))


@dataclass
class SynthSpec:
    """Layout of the planted dataset; defaults give the desk-scale setup."""

    num_classes: int = 3
    channels: int = 32
    spatial: int = 6
    n_per_class: int = 200
    noisy: tuple[frozenset[int], ...] = field(default_factory=_default_noisy)
    flat: frozenset[int] = field(default_factory=_default_flat)
    friendly: tuple[frozenset[int], ...] | None = None
    seed: int = 0
    shift: float = 0.5

    def __post_init__(self):
        if self.num_classes < 1:
            raise SpecError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.n_per_class < 1:
            raise SpecError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.spatial < 2:
            raise SpecError(f"spatial must be >= 2, got {self.spatial}")
        self.noisy = tuple(frozenset(s) for s in self.noisy)
        self.flat = frozenset(self.flat)
        if len(self.noisy) != self.num_classes:
            raise SpecError(
                f"noisy needs one channel set per class, got {len(self.noisy)}"
            )
        all_channels = range(self.channels)
        if self.friendly is None:
            self.friendly = tuple(
                frozenset(all_channels) - self.noisy[c] - self.flat
                for c in range(self.num_classes)
            )
        else:
            self.friendly = tuple(frozenset(s) for s in self.friendly)
            if len(self.friendly) != self.num_classes:
                raise SpecError(
                    f"friendly needs one channel set per class, got {len(self.friendly)}"
                )
        for c in range(self.num_classes):
            sets = (self.friendly[c], self.noisy[c], self.flat)
            union = frozenset().union(*sets)
            if sum(len(s) for s in sets) != len(union):
                raise SpecError(f"class {c}: friendly/noisy/flat sets overlap")
            if union and (min(union) < 0 or max(union) >= self.channels):
                raise SpecError(f"class {c}: channel index outside [0, {self.channels})")


def _mixture_weight_friendly(spec: SynthSpec, class_id: int, channel: int) -> float:
    t = spec.num_classes
    if t == 1:
        return 0.5
    rank = (class_id + channel) % t
    return 0.15 + 0.7 * rank / (t - 1)


def _mixture_weight_flat(channel: int) -> float:
    return 0.2 + 0.6 * ((channel * 7) % 11) / 10.0


def _spike_probability(spec: SynthSpec, class_id: int) -> float:
    t = spec.num_classes
    return 0.5 if t == 1 else 0.35 + 0.3 * class_id / (t - 1)


# Amplitudes chosen so converged linear heads must lean on the (drift-prone)
# noisy channels: friendly-only signal is informative but not sufficient.
_FRIENDLY_SIGNAL = 0.15
_NOISY_SIGNAL = 1.2


def _friendly_signature(class_id: int, channel: int, num_classes: int) -> float:
    return 1.0 if (class_id + channel) % num_classes == 0 else 0.0


def _noisy_signature(spec: SynthSpec, owner: int, class_id: int, channel: int) -> float:
    # Each class owns one rank of its noisy channel set, so every class
    # carries the same amount of drift-sensitive signal.
    ranks = sorted(spec.noisy[owner])
    rank = class_id % len(ranks)
    return 1.0 if channel == ranks[rank] else 0.0


def _mean_offset(spec: SynthSpec, class_id: int, channel: int, test: bool) -> float:
    """Class-signature mean shift; drifts on noisy channels at test time."""
    t = spec.num_classes
    if channel in spec.flat:
        return 0.0
    if channel in spec.noisy[class_id]:
        base = _NOISY_SIGNAL * _noisy_signature(spec, class_id, class_id, channel)
        if test and t > 1:
            rotated = _NOISY_SIGNAL * _noisy_signature(
                spec, class_id, (class_id + 1) % t, channel
            )
            return (1.0 - spec.shift) * base + spec.shift * rotated
        return base
    return _FRIENDLY_SIGNAL * _friendly_signature(class_id, channel, t)


def _draw_mixture(rng: np.random.Generator, weight: float, n: int) -> np.ndarray:
    # Both components have unit variance, so the mixing weight alone moves
    # the kurtosis: laplace gives +3 excess, uniform gives -1.2.
    peaked = rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=n)
    flat = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=n)
    choose = rng.random(n) < weight
    return np.where(choose, peaked, flat)


def _draw_noisy(rng: np.random.Generator, spike_prob: float, n: int) -> np.ndarray:
    spike = rng.random() < spike_prob
    pos = rng.integers(n)
    amplitude = rng.uniform(2.5, 3.5)
    flat = rng.uniform(-1.0, 1.0, size=n)
    if spike:
        units = rng.uniform(-0.05, 0.05, size=n)
        units[pos] = amplitude
        return units
    return flat


def _sample_feature(spec: SynthSpec, class_id: int, index: int, split: int) -> FeatureMap:
    rng = np.random.default_rng([spec.seed, split, class_id, index])
    n = spec.spatial * spec.spatial
    values = np.empty((spec.channels, n), dtype=np.float64)
    test = split == 1
    spike_prob = _spike_probability(spec, class_id)
    for ch in range(spec.channels):
        if ch in spec.noisy[class_id]:
            units = _draw_noisy(rng, spike_prob, n)
        elif ch in spec.flat:
            units = _draw_mixture(rng, _mixture_weight_flat(ch), n)
        else:
            # Unassigned channels behave like friendly ones.
            units = _draw_mixture(rng, _mixture_weight_friendly(spec, class_id, ch), n)
        values[ch] = units + _mean_offset(spec, class_id, ch, test)
    return FeatureMap(values.reshape(spec.channels, spec.spatial, spec.spatial))


def _sample_boxes(spec: SynthSpec, class_id: int, index: int, split: int):
    """Ground-truth box in this sample's image cell plus a jittered proposal."""
    rng = np.random.default_rng([spec.seed, split, class_id, index, _BOX_STREAM])
    global_idx = class_id * spec.n_per_class + index
    slot = global_idx % _SAMPLES_PER_IMAGE
    ox = slot * _CELL
    x1 = ox + rng.uniform(2.0, 8.0)
    y1 = rng.uniform(2.0, 8.0)
    w = rng.uniform(14.0, 24.0)
    h = rng.uniform(14.0, 24.0)
    gt = (x1, y1, x1 + w, y1 + h)

    cx = (gt[0] + gt[2]) / 2.0 + rng.uniform(-0.08, 0.08) * w
    cy = (gt[1] + gt[3]) / 2.0 + rng.uniform(-0.08, 0.08) * h
    pw = w * rng.uniform(0.92, 1.08)
    ph = h * rng.uniform(0.92, 1.08)
    proposal = (cx - pw / 2.0, cy - ph / 2.0, cx + pw / 2.0, cy + ph / 2.0)
    return gt, proposal


def _image_id(spec: SynthSpec, class_id: int, index: int) -> int:
    return (class_id * spec.n_per_class + index) // _SAMPLES_PER_IMAGE


def _build_split(spec: SynthSpec, split: int) -> tuple[Dataset, list[GroundTruthBox]]:
    samples = []
    ground_truth = []
    for class_id in range(spec.num_classes):
        for index in range(spec.n_per_class):
            gt, proposal = _sample_boxes(spec, class_id, index, split)
            image_id = _image_id(spec, class_id, index)
            samples.append(
                LabeledSample(
                    feature=_sample_feature(spec, class_id, index, split),
                    class_id=class_id,
                    box=proposal,
                    image_id=image_id,
                )
            )
            ground_truth.append(
                GroundTruthBox(image_id=image_id, class_id=class_id, box=gt)
            )
    return Dataset(samples=samples, num_classes=spec.num_classes), ground_truth


def generate(spec: SynthSpec) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) pair; test noisy channels drift by `shift`."""
    train, _ = _build_split(spec, split=0)
    test, _ = _build_split(spec, split=1)
    return train, test


def synthetic_ground_truth(spec: SynthSpec) -> tuple[list[GroundTruthBox], list[GroundTruthBox]]:
    """Ground-truth boxes matching generate(), for regression and evaluation."""
    _, train_gt = _build_split(spec, split=0)
    _, test_gt = _build_split(spec, split=1)
    return train_gt, test_gt


def roles_dict(spec: SynthSpec) -> dict:
    """JSON-ready record of the planted channel roles and generator knobs."""
    return {
        "num_classes": spec.num_classes,
        "channels": spec.channels,
        "spatial": spec.spatial,
        "n_per_class": spec.n_per_class,
        "seed": spec.seed,
        "shift": spec.shift,
        "noisy": [sorted(s) for s in spec.noisy],
        "flat": sorted(spec.flat),
        "friendly": [sorted(s) for s in spec.friendly],
    }


@dataclass
class RecoveryStats:
    """How well edit masks rediscovered the planted channel roles."""

    noisy_recall: float
    flat_recall: float
    friendly_dropped_frac: float
    per_class_noisy_recall: list[float]
    per_class_friendly_dropped: list[float]


def planted_recovery(masks, roles: dict) -> RecoveryStats:
    """Score one run's masks against the planted roles sidecar."""
    noisy = [frozenset(s) for s in roles["noisy"]]
    flat = frozenset(roles["flat"])
    friendly = [frozenset(s) for s in roles["friendly"]]
    by_class = {m.class_id: m for m in masks}

    noisy_recalls = []
    friendly_dropped = []
    for cls, mask in sorted(by_class.items()):
        if noisy[cls]:
            noisy_recalls.append(len(mask.dropped_intra & noisy[cls]) / len(noisy[cls]))
        if friendly[cls]:
            friendly_dropped.append(len(mask.dropped() & friendly[cls]) / len(friendly[cls]))

    if flat:
        flat_recalls = [
            len(m.dropped_inter & flat) / len(flat) for m in by_class.values()
        ]
        flat_recall = float(np.mean(flat_recalls))
    else:
        flat_recall = float("nan")
    return RecoveryStats(
        noisy_recall=float(np.mean(noisy_recalls)) if noisy_recalls else float("nan"),
        flat_recall=flat_recall,
        friendly_dropped_frac=float(np.mean(friendly_dropped)) if friendly_dropped else float("nan"),
        per_class_noisy_recall=noisy_recalls,
        per_class_friendly_dropped=friendly_dropped,
    )
