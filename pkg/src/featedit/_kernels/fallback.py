"""Pure numpy implementations of the hot kernels.

Selected by ``featedit._kernels`` when the compiled extension is missing or
disabled. Semantics match ``_core.pyx`` exactly; only speed differs.
"""

from __future__ import annotations

import numpy as np


def kurtosis_rows(x: np.ndarray) -> np.ndarray:
    """Excess kurtosis of each row of an (M, n) array, population moments.

    Rows with exactly zero variance map to 0.0.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=1, keepdims=True)
    d = x - mu
    d2 = d * d
    m2 = d2.mean(axis=1)
    m4 = (d2 * d2).mean(axis=1)
    out = np.zeros(x.shape[0], dtype=np.float64)
    nz = m2 > 0.0
    out[nz] = m4[nz] / (m2[nz] * m2[nz]) - 3.0
    return out


def svm_epoch(w, b, X, y, cost, order, lam, t, t0):
    """One pass of per-sample subgradient updates, step 1 / (lam * (t + t0)).

    Mutates ``w`` in place; returns the updated (b, t) where ``t`` counts
    updates performed so far across epochs.
    """
    for idx in order:
        t += 1
        eta = 1.0 / (lam * (t + t0))
        xi = X[idx]
        if y[idx] * (xi @ w + b) < 1.0:
            scale = eta * cost[idx] * y[idx]
            w *= 1.0 - eta * lam
            w += scale * xi
            b += scale
        else:
            w *= 1.0 - eta * lam
    return b, t


def nms_keep(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float) -> np.ndarray:
    """Greedy suppression; returns kept indices in descending-score order.

    Score ties break toward the earlier index. A candidate is discarded when
    its IoU with an already kept box strictly exceeds ``iou_thresh``.
    """
    n = len(scores)
    order = np.lexsort((np.arange(n), -scores))
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    kept = []
    while order.size > 0:
        i = order[0]
        kept.append(int(i))
        rest = order[1:]
        ix1 = np.maximum(x1[i], x1[rest])
        iy1 = np.maximum(y1[i], y1[rest])
        ix2 = np.minimum(x2[i], x2[rest])
        iy2 = np.minimum(y2[i], y2[rest])
        iw = np.maximum(ix2 - ix1, 0.0)
        ih = np.maximum(iy2 - iy1, 0.0)
        inter = iw * ih
        iou = inter / (areas[i] + areas[rest] - inter)
        order = rest[iou <= iou_thresh]
    return np.asarray(kept, dtype=np.int64)
