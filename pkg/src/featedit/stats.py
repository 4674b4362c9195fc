"""Per-channel statistics: kurtosis, activation ranking, entropy, 2-component PCA.

The kurtosis of a channel summarizes the shape of its S*S unit distribution:

    kurt = mean((a - abar)^4) / mean((a - abar)^2)^2 - 3

with plain arithmetic means over the channel's units, so a normal-shaped
channel sits near zero. A channel whose units are all equal carries no shape
information and is assigned kurtosis 0 by convention.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    EmptyInputError,
    GeometryError,
    InsufficientDataError,
    IoError,
    ShapeError,
    UndefinedDistributionError,
)
from .store import Dataset, FeatureMap

_PROB_TOL = 1e-12
_POWER_TOL = 1e-12
_POWER_MAX_ITER = 10_000


@dataclass
class ChannelStatsMatrix:
    """N x C matrix; entry (j, i) is the kurtosis of sample j's channel i."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"stats matrix must be 2-d, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("stats matrix contains non-finite entries")
        self.values = arr

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


@dataclass
class ProbabilityVector:
    """Non-negative entries summing to 1, or flagged undefined when the
    source variances were all zero."""

    entries: np.ndarray
    undefined: bool = False

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.ndim != 1:
            raise ShapeError(f"probability vector must be 1-d, got shape {arr.shape}")
        if not self.undefined:
            if (arr < 0).any() or not np.isfinite(arr).all():
                raise ValueError("probabilities must be finite and non-negative")
            if abs(float(arr.sum()) - 1.0) > _PROB_TOL:
                raise ValueError(f"probabilities sum to {arr.sum()!r}, not 1")
        self.entries = arr

    def __len__(self) -> int:
        return len(self.entries)


def channel_kurtosis(fmap: FeatureMap) -> np.ndarray:
    """Kurtosis of each channel's unit distribution, length C float64."""
    c = fmap.channels
    flat = fmap.values.reshape(c, -1)
    return _kernels.kurtosis_rows(flat)


def stats_matrix(dataset: Dataset) -> ChannelStatsMatrix:
    """Stack channel_kurtosis over all samples into an N x C matrix."""
    if len(dataset) == 0:
        raise EmptyInputError("cannot compute statistics of an empty dataset")
    n = len(dataset)
    c = dataset.channels
    stacked = dataset.stacked_values().reshape(n * c, -1)
    values = _kernels.kurtosis_rows(stacked).reshape(n, c)
    return ChannelStatsMatrix(values=values)


def central_window_max(fmap: FeatureMap, channel: int) -> float:
    """Max activation over the central 2x2 spatial window of one channel."""
    s = fmap.spatial
    if s < 2:
        raise GeometryError(f"central 2x2 window needs S >= 2, got S={s}")
    if not 0 <= channel < fmap.channels:
        raise IndexError(f"channel {channel} out of range [0, {fmap.channels})")
    lo = (s - 1) // 2
    return float(fmap.values[channel, lo : lo + 2, lo : lo + 2].max())


def rank_channel_activations(dataset: Dataset, channel: int, k: int) -> list[int]:
    """Sample indices sorted by descending central-window max of a channel.

    Ties break toward the lower sample index; returns the first min(k, N).
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    scores = [central_window_max(s.feature, channel) for s in dataset]
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return ranked[: min(k, len(ranked))]


def shannon_entropy(p: ProbabilityVector) -> float:
    """Entropy in nats, with 0 * ln 0 taken as 0."""
    if p.undefined:
        raise UndefinedDistributionError("entropy of an undefined distribution")
    e = p.entries
    pos = e[e > 0]
    return float(-(pos * np.log(pos)).sum())


def mask_expectation(p: ProbabilityVector, mask) -> float:
    """Probability mass retained by a keep/drop mask: sum of p_i * keep_i."""
    if p.undefined:
        raise UndefinedDistributionError("expectation under an undefined distribution")
    keep = np.asarray(mask.keep, dtype=np.float64)
    if keep.shape != p.entries.shape:
        raise ShapeError(f"mask length {keep.shape} != distribution length {p.entries.shape}")
    return float(np.dot(p.entries, keep))


@dataclass
class PcaResult:
    """Top-component projection of mean-centered data."""

    projections: np.ndarray  # N x k
    basis: np.ndarray        # k x D, orthonormal rows
    variances: np.ndarray    # k eigenvalues of the sample covariance, descending


def _power_iteration(cov: np.ndarray, prior: list[np.ndarray], rng) -> tuple[float, np.ndarray]:
    d = cov.shape[0]
    v = rng.standard_normal(d)
    for u in prior:
        v -= np.dot(u, v) * u
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = np.zeros(d)
        v[0] = 1.0
    else:
        v /= norm
    lam = 0.0
    for _ in range(_POWER_MAX_ITER):
        y = cov @ v
        for u in prior:
            y -= np.dot(u, y) * u
        norm = np.linalg.norm(y)
        if norm < 1e-300:
            lam = 0.0
            break
        v_new = y / norm
        lam_new = float(v_new @ cov @ v_new)
        if abs(lam_new - lam) <= _POWER_TOL:
            v = v_new
            lam = lam_new
            break
        v = v_new
        lam = lam_new
    if lam == 0.0:
        # Deflated matrix is numerically null: any unit vector orthogonal to
        # the prior basis completes the frame.
        for i in range(d):
            cand = np.zeros(d)
            cand[i] = 1.0
            for u in prior:
                cand -= np.dot(u, cand) * u
            norm = np.linalg.norm(cand)
            if norm > 1e-8:
                v = cand / norm
                break
    peak = int(np.argmax(np.abs(v)))
    if v[peak] < 0:
        v = -v
    return max(lam, 0.0), v


def pca_project(vectors, components: int = 2) -> PcaResult:
    """Project rows onto the top principal components via deflated power iteration.

    Variances are eigenvalues of the sample covariance (1/(N-1) normalization),
    descending. Basis sign is fixed by making each vector's largest-magnitude
    coordinate positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected an N x D matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise InsufficientDataError(f"PCA needs at least 2 rows, got {n}")
    if d < components:
        raise InsufficientDataError(f"PCA needs D >= {components}, got D={d}")
    if not np.isfinite(x).all():
        raise ValueError("PCA input contains non-finite entries")

    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    rng = np.random.default_rng(0x5EED)

    basis = []
    variances = []
    deflated = cov.copy()
    for _ in range(components):
        lam, v = _power_iteration(deflated, basis, rng)
        basis.append(v)
        variances.append(lam)
        deflated = deflated - lam * np.outer(v, v)

    basis_arr = np.stack(basis)
    return PcaResult(
        projections=centered @ basis_arr.T,
        basis=basis_arr,
        variances=np.asarray(variances),
    )


# -- CSV exports ---------------------------------------------------------------


def write_stats_csv(stats: ChannelStatsMatrix, path) -> None:
    """Export `sample_index,channel,kurtosis` rows for external tooling."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_index", "channel", "kurtosis"])
            for j in range(stats.num_samples):
                for i in range(stats.num_channels):
                    writer.writerow([j, i, format(stats.values[j, i], ".17g")])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_pca_csv(result: PcaResult, labels, path) -> None:
    """Export `sample_index,pc1,pc2,class_id` rows for external plotting."""
    labels = np.asarray(labels)
    if len(labels) != len(result.projections):
        raise ShapeError(
            f"{len(labels)} labels for {len(result.projections)} projected rows"
        )
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_index", "pc1", "pc2", "class_id"])
            for j, row in enumerate(result.projections):
                writer.writerow(
                    [j, format(row[0], ".17g"), format(row[1], ".17g"), int(labels[j])]
                )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
