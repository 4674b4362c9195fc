"""Naive reference implementations used to cross-check the main modules.

Everything here is a literal transcription of the defining formulas with
plain loops and `math.fsum`, deliberately unoptimized and sharing no
computation code with the optimized modules. Inputs beyond desk scale are
rejected so nobody is tempted to use these in a pipeline.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import OracleScaleError
from .store import Dataset

_MAX_SAMPLES = 1000
_MAX_BOXES = 50


def _fmean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def oracle_kurtosis(units) -> float:
    """Excess kurtosis of one channel's unit list, population moments."""
    units = [float(u) for u in units]
    mean = _fmean(units)
    m2 = _fmean((u - mean) ** 2 for u in units)
    m4 = _fmean((u - mean) ** 4 for u in units)
    if m2 == 0.0:
        return 0.0
    return m4 / (m2 * m2) - 3.0


def oracle_stats(dataset: Dataset) -> list[list[float]]:
    """Per-sample, per-channel kurtosis values as nested lists."""
    if len(dataset) > _MAX_SAMPLES:
        raise OracleScaleError(f"oracle accepts at most {_MAX_SAMPLES} samples")
    rows = []
    for sample in dataset:
        c = sample.feature.channels
        flat = sample.feature.values.reshape(c, -1)
        rows.append([oracle_kurtosis(flat[i]) for i in range(c)])
    return rows


def oracle_profile(stats_rows, labels, num_classes: int):
    """(intra, class_means, grand_mean, inter) per the defining formulas."""
    if len(stats_rows) > _MAX_SAMPLES:
        raise OracleScaleError(f"oracle accepts at most {_MAX_SAMPLES} rows")
    labels = [int(v) for v in labels]
    num_channels = len(stats_rows[0])
    intra = [[0.0] * num_channels for _ in range(num_classes)]
    class_means = [[0.0] * num_channels for _ in range(num_classes)]
    for cls in range(num_classes):
        members = [row for row, lab in zip(stats_rows, labels) if lab == cls]
        for i in range(num_channels):
            column = [row[i] for row in members]
            mean = _fmean(column)
            class_means[cls][i] = mean
            intra[cls][i] = _fmean((v - mean) ** 2 for v in column)
    grand_mean = [
        _fmean(class_means[cls][i] for cls in range(num_classes))
        for i in range(num_channels)
    ]
    inter = [
        _fmean((class_means[cls][i] - grand_mean[i]) ** 2 for cls in range(num_classes))
        for i in range(num_channels)
    ]
    return intra, class_means, grand_mean, inter


def oracle_mask(intra_row, inter_row, intra_frac: float, inter_frac: float):
    """(dropped_intra, dropped_inter) via a full sort of (value, index) pairs.

    A criterion whose variances sum to zero contributes an empty set.
    """
    c = len(intra_row)
    n_intra = int(intra_frac * c)
    n_inter = int(inter_frac * c)
    dropped_intra: set[int] = set()
    dropped_inter: set[int] = set()
    if math.fsum(intra_row) > 0.0:
        pairs = sorted(((-v, i) for i, v in enumerate(intra_row)))
        dropped_intra = {i for _, i in pairs[:n_intra]}
    if math.fsum(inter_row) > 0.0:
        pairs = sorted(((v, i) for i, v in enumerate(inter_row)))
        dropped_inter = {i for _, i in pairs[:n_inter]}
    return dropped_intra, dropped_inter


def oracle_apply_mask(values, keep):
    """Unit-by-unit masking loop over a (C, S, S) array."""
    out = np.array(values, dtype=np.float32, copy=True)
    c, s, _ = out.shape
    for ch in range(c):
        for row in range(s):
            for col in range(s):
                if keep[ch] == 0:
                    out[ch, row, col] = 0.0
    return out


def oracle_central_rank(dataset: Dataset, channel: int, k: int) -> list[int]:
    """Rank samples by central 2x2 window max, enumerated explicitly."""
    if len(dataset) > _MAX_SAMPLES:
        raise OracleScaleError(f"oracle accepts at most {_MAX_SAMPLES} samples")
    maxima = []
    for idx, sample in enumerate(dataset):
        s = sample.feature.spatial
        lo = (s - 1) // 2
        best = -math.inf
        for row in (lo, lo + 1):
            for col in (lo, lo + 1):
                best = max(best, float(sample.feature.values[channel, row, col]))
        maxima.append((idx, best))
    maxima.sort(key=lambda pair: (-pair[1], pair[0]))
    return [idx for idx, _ in maxima[:k]]


def oracle_entropy(probabilities) -> float:
    total = 0.0
    for p in probabilities:
        if p > 0.0:
            total += p * math.log(p)
    return -total


def oracle_dot(a, b) -> float:
    return math.fsum(x * y for x, y in zip(a, b))


# -- detection -------------------------------------------------------------------


def oracle_iou(a, b) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def oracle_nms(boxes, scores, iou_thresh: float) -> list[int]:
    """Greedy suppression simulated with explicit candidate sets."""
    if len(boxes) > _MAX_BOXES:
        raise OracleScaleError(f"oracle accepts at most {_MAX_BOXES} boxes")
    remaining = set(range(len(boxes)))
    kept = []
    while remaining:
        best = min(remaining, key=lambda i: (-scores[i], i))
        kept.append(best)
        remaining.remove(best)
        for i in sorted(remaining):
            if oracle_iou(boxes[best], boxes[i]) > iou_thresh:
                remaining.remove(i)
    return kept


def oracle_ap(det_rows, gt_rows, match_iou: float, mode: str = "eleven_point") -> float:
    """AP from raw rows.

    det_rows: (image_id, score, box) tuples of one class.
    gt_rows: (image_id, box, difficult) tuples of the same class.
    """
    order = sorted(range(len(det_rows)), key=lambda i: (-det_rows[i][1], i))
    num_gt = sum(1 for _, _, difficult in gt_rows if not difficult)
    taken = [False] * len(gt_rows)
    points = []
    tp = 0
    fp = 0
    for i in order:
        image_id, _, box = det_rows[i]
        best_j = -1
        best_overlap = -1.0
        difficult_hit = False
        for j, (g_image, g_box, g_difficult) in enumerate(gt_rows):
            if g_image != image_id:
                continue
            overlap = oracle_iou(box, g_box)
            if overlap < match_iou:
                continue
            if g_difficult:
                difficult_hit = True
            elif not taken[j] and overlap > best_overlap:
                best_overlap = overlap
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            tp += 1
        elif not difficult_hit:
            fp += 1
        recall = tp / num_gt if num_gt > 0 else 0.0
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        points.append((recall, precision))

    if not points or num_gt == 0:
        return 0.0
    if mode == "eleven_point":
        total = 0.0
        for step in range(11):
            r = step / 10.0
            candidates = [p for rec, p in points if rec >= r]
            total += max(candidates) if candidates else 0.0
        return total / 11.0
    # Continuous: integrate the monotone envelope over recall.
    area = 0.0
    prev_recall = 0.0
    for rec, _ in sorted(set(points)):
        envelope = max((p for r2, p in points if r2 >= rec), default=0.0)
        area += (rec - prev_recall) * envelope
        prev_recall = rec
    return area


# -- optimization ----------------------------------------------------------------


def oracle_svm(features, labels, reg_lambda: float, iterations: int = 100_000):
    """Projected full-batch subgradient descent, best objective tracked.

    The weight iterate is projected onto the ball of radius 1/sqrt(lambda)
    after each step. Returns (best_objective, best_w, best_b).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    radius = 1.0 / math.sqrt(reg_lambda)

    def objective(wv, bv):
        hinge = np.maximum(0.0, 1.0 - y * (x @ wv + bv))
        return 0.5 * reg_lambda * float(wv @ wv) + float(hinge.mean())

    best = objective(w, b)
    best_w, best_b = w.copy(), b
    for step in range(1, iterations + 1):
        margins = y * (x @ w + b)
        violated = margins < 1.0
        grad_w = reg_lambda * w - (y[violated, None] * x[violated]).sum(axis=0) / n
        grad_b = -float(y[violated].sum()) / n
        eta = 1.0 / (reg_lambda * step)
        w = w - eta * grad_w
        b = b - eta * grad_b
        norm = float(np.linalg.norm(w))
        if norm > radius:
            w = w * (radius / norm)
        obj = objective(w, b)
        if obj < best:
            best = obj
            best_w, best_b = w.copy(), b
    return best, best_w, best_b


def oracle_pca_eigenvalues(matrix, k: int = 2):
    """Top-k eigenvalues of the sample covariance via a dense eigensolver."""
    x = np.asarray(matrix, dtype=np.float64)
    n = x.shape[0]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigenvalues = np.linalg.eigvalsh(cov)
    return np.sort(eigenvalues)[::-1][:k]


def oracle_ridge(features, targets, ridge_lambda: float):
    """Dense normal equations assembled entry by entry, solved with lstsq.

    Returns (weights 4 x D, biases 4) for the four target columns.
    """
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    n, d = x.shape
    a = np.zeros((d + 1, d + 1))
    for p in range(d):
        for q in range(d):
            a[p, q] = math.fsum(x[j, p] * x[j, q] for j in range(n)) / n
        a[p, p] += ridge_lambda
        a[p, d] = math.fsum(x[j, p] for j in range(n)) / n
        a[d, p] = a[p, d]
    a[d, d] = 1.0
    weights = np.zeros((4, d))
    biases = np.zeros(4)
    for dim in range(4):
        rhs = np.zeros(d + 1)
        for p in range(d):
            rhs[p] = math.fsum(x[j, p] * t[j, dim] for j in range(n)) / n
        rhs[d] = math.fsum(t[j, dim] for j in range(n)) / n
        solution, _, _, _ = np.linalg.lstsq(a, rhs, rcond=None)
        weights[dim] = solution[:d]
        biases[dim] = solution[d]
    return weights, biases


def oracle_ridge_objective(weights, biases, features, targets, ridge_lambda: float) -> float:
    """Mean squared residual plus ridge penalty, summed over target columns."""
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    n = x.shape[0]
    total = 0.0
    for dim in range(weights.shape[0]):
        residuals = [
            (oracle_dot(weights[dim], x[j]) + biases[dim] - t[j, dim]) ** 2
            for j in range(n)
        ]
        total += math.fsum(residuals) / n
        total += ridge_lambda * math.fsum(v * v for v in weights[dim])
    return total
