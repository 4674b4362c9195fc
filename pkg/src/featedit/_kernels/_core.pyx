# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors ``fallback.py``; the package selects whichever import succeeds.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def kurtosis_rows(x):
    """Excess kurtosis of each row of an (M, n) array, population moments.

    Rows with exactly zero variance map to 0.0.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m = xa.shape[0]
    cdef Py_ssize_t n = xa.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(m, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double mu, d, d2, s2, s4
    for i in range(m):
        mu = 0.0
        for j in range(n):
            mu += xa[i, j]
        mu /= n
        s2 = 0.0
        s4 = 0.0
        for j in range(n):
            d = xa[i, j] - mu
            d2 = d * d
            s2 += d2
            s4 += d2 * d2
        s2 /= n
        s4 /= n
        if s2 > 0.0:
            out[i] = s4 / (s2 * s2) - 3.0
    return out


def svm_epoch(w, double b, X, y, cost, order, double lam, long long t, double t0):
    """One pass of per-sample subgradient updates, step 1 / (lam * (t + t0)).

    Mutates ``w`` in place; returns the updated (b, t) where ``t`` counts
    updates performed so far across epochs.
    """
    cdef double[::1] wv = w
    cdef double[:, ::1] Xv = X
    cdef double[::1] yv = y
    cdef double[::1] cv = cost
    cdef long long[::1] ov = order
    cdef Py_ssize_t n = ov.shape[0]
    cdef Py_ssize_t d = wv.shape[0]
    cdef Py_ssize_t k, j, idx
    cdef double eta, margin, scale, shrink
    for k in range(n):
        idx = ov[k]
        t += 1
        eta = 1.0 / (lam * (t + t0))
        margin = b
        for j in range(d):
            margin += Xv[idx, j] * wv[j]
        shrink = 1.0 - eta * lam
        if yv[idx] * margin < 1.0:
            scale = eta * cv[idx] * yv[idx]
            for j in range(d):
                wv[j] = wv[j] * shrink + scale * Xv[idx, j]
            b += scale
        else:
            for j in range(d):
                wv[j] = wv[j] * shrink
    return b, t


def nms_keep(boxes, scores, double iou_thresh):
    """Greedy suppression; returns kept indices in descending-score order.

    Score ties break toward the earlier index. A candidate is discarded when
    its IoU with an already kept box strictly exceeds ``iou_thresh``.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ba = np.ascontiguousarray(boxes, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sa = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n = sa.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.lexsort((np.arange(n), -sa)).astype(np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] kept = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] alive = np.ones(n, dtype=np.uint8)
    cdef Py_ssize_t n_kept = 0
    cdef Py_ssize_t a, c, i, j
    cdef double ix1, iy1, ix2, iy2, iw, ih, inter, iou, area_i, area_j
    for a in range(n):
        i = order[a]
        if not alive[a]:
            continue
        kept[n_kept] = i
        n_kept += 1
        area_i = (ba[i, 2] - ba[i, 0]) * (ba[i, 3] - ba[i, 1])
        for c in range(a + 1, n):
            if not alive[c]:
                continue
            j = order[c]
            ix1 = max(ba[i, 0], ba[j, 0])
            iy1 = max(ba[i, 1], ba[j, 1])
            ix2 = min(ba[i, 2], ba[j, 2])
            iy2 = min(ba[i, 3], ba[j, 3])
            iw = max(ix2 - ix1, 0.0)
            ih = max(iy2 - iy1, 0.0)
            inter = iw * ih
            area_j = (ba[j, 2] - ba[j, 0]) * (ba[j, 3] - ba[j, 1])
            iou = inter / (area_i + area_j - inter)
            if iou > iou_thresh:
                alive[c] = 0
    return kept[:n_kept].copy()
