"""One-vs-rest linear SVM (L2 regularization, L1 hinge) and box regression.

The SVM objective is

    (reg_lambda / 2) * ||w||^2 + (1/N) * sum_j max(0, 1 - y_j * (w.x_j + b))

with the bias unregularized. Training runs deterministic epoch-based
subgradient descent over seed-shuffled samples with step 1/(lambda*(t+t0))
at the t-th update, keeping the best-objective iterate seen at any epoch end.
The warm offset t0 = max(1, 1/lambda) bounds the first step near 1 (a bare
Pegasos schedule diverges for small lambda before it converges) and matches
the undamped schedule once t >> 1/lambda. Starting from the zero model
guarantees the returned objective never exceeds the zero model's.

Box regression predicts the standard scale-invariant transform between a
proposal box and its ground truth: center offsets relative to proposal size
plus log size ratios. Each of the four targets is an independent ridge
regression solved by normal equations (bias unregularized).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    DegenerateLabelsError,
    DomainError,
    EmptyInputError,
    FormatError,
    GeometryError,
    IoError,
    ShapeError,
    TruncationError,
)
from .store import Box, Dataset, check_box

_LMOD_MAGIC = b"LMOD1"
_RMOD_MAGIC = b"RMOD1"


@dataclass
class SvmConfig:
    reg_lambda: float = 1e-4
    epochs: int = 50
    seed: int = 0
    tolerance: float = 1e-6
    positive_weight: float = 1.0

    def __post_init__(self):
        if self.reg_lambda <= 0:
            raise DomainError(f"reg_lambda must be positive, got {self.reg_lambda}")
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.tolerance <= 0:
            raise DomainError(f"tolerance must be positive, got {self.tolerance}")
        if self.positive_weight <= 0:
            raise DomainError(f"positive_weight must be positive, got {self.positive_weight}")


@dataclass
class LinearModel:
    """Weight vector plus bias for one class head."""

    weights: np.ndarray
    bias: float
    class_id: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ShapeError(f"weights must be 1-d, got shape {self.weights.shape}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return len(self.weights)


def _as_xy(features, labels):
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be an N x D matrix, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ShapeError(f"{y.shape} labels for {x.shape[0]} feature rows")
    if x.shape[0] == 0:
        raise EmptyInputError("no training samples")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("labels must be -1 or +1")
    return x, y


def svm_objective(model: LinearModel, features, labels, reg_lambda: float) -> float:
    """Regularized mean hinge loss of a model on (+-1)-labeled rows."""
    x, y = _as_xy(features, labels)
    if x.shape[1] != model.dim:
        raise ShapeError(f"model dim {model.dim} != feature dim {x.shape[1]}")
    margins = y * (x @ model.weights + model.bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * reg_lambda * np.dot(model.weights, model.weights) + hinge.mean())


def _weighted_objective(w, b, x, y, cost, reg_lambda) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (x @ w + b))
    return float(0.5 * reg_lambda * np.dot(w, w) + (cost * hinge).mean())


def train_svm_binary(features, labels, cfg: SvmConfig, class_id: int = 0) -> LinearModel:
    """Train one binary hinge-loss classifier on (+-1)-labeled feature rows."""
    x, y = _as_xy(features, labels)
    if (y > 0).all() or (y < 0).all():
        raise DegenerateLabelsError("training data contains a single label")

    cost = np.where(y > 0, cfg.positive_weight, 1.0)
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    t = 0
    t0 = max(1.0, 1.0 / cfg.reg_lambda)
    rng = np.random.default_rng(cfg.seed)

    prev_obj = _weighted_objective(w, b, x, y, cost, cfg.reg_lambda)
    best_obj = prev_obj
    best_w = w.copy()
    best_b = b
    for _ in range(cfg.epochs):
        order = rng.permutation(n).astype(np.int64)
        b, t = _kernels.svm_epoch(w, b, x, y, cost, order, cfg.reg_lambda, t, t0)
        obj = _weighted_objective(w, b, x, y, cost, cfg.reg_lambda)
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
            best_b = b
        # Subgradient epochs oscillate, so the stop test is on absolute
        # movement; the returned iterate is the best one regardless.
        if abs(prev_obj - obj) < cfg.tolerance:
            break
        prev_obj = obj
    return LinearModel(weights=best_w, bias=best_b, class_id=class_id)


def train_svm(dataset: Dataset, positive_class: int, cfg: SvmConfig) -> LinearModel:
    """One-vs-rest SVM for one class of a dataset (features flattened channel-major)."""
    x = dataset.feature_matrix()
    y = np.where(dataset.labels() == positive_class, 1.0, -1.0)
    return train_svm_binary(x, y, cfg, class_id=positive_class)


def score(model: LinearModel, feature) -> float:
    """Decision value w.x + b."""
    x = np.asarray(feature, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.dim:
        raise ShapeError(f"feature dim {x.shape[0]} != model dim {model.dim}")
    return float(np.dot(model.weights, x) + model.bias)


# -- box regression ------------------------------------------------------------


def _center_size(box: Box):
    x1, y1, x2, y2 = box
    w = x2 - x1
    h = y2 - y1
    if w <= 0 or h <= 0:
        raise GeometryError(f"degenerate box {box}")
    return (x1 + x2) / 2.0, (y1 + y2) / 2.0, w, h


def box_targets(proposal: Box, gt: Box) -> tuple[float, float, float, float]:
    """Scale-invariant transform taking the proposal onto the ground truth."""
    px, py, pw, ph = _center_size(check_box(proposal))
    gx, gy, gw, gh = _center_size(check_box(gt))
    return (
        (gx - px) / pw,
        (gy - py) / ph,
        float(np.log(gw / pw)),
        float(np.log(gh / ph)),
    )


def apply_transform(box: Box, transform) -> Box:
    """Invert box_targets: apply a predicted transform to a proposal box."""
    tx, ty, tw, th = (float(v) for v in transform)
    px, py, pw, ph = _center_size(check_box(box))
    gx = px + tx * pw
    gy = py + ty * ph
    gw = pw * float(np.exp(tw))
    gh = ph * float(np.exp(th))
    return (gx - gw / 2.0, gy - gh / 2.0, gx + gw / 2.0, gy + gh / 2.0)


@dataclass
class BoxRegressor:
    """Four ridge heads predicting (tx, ty, tw, th) from flattened features."""

    weights: np.ndarray  # 4 x D
    biases: np.ndarray   # 4
    ridge_lambda: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != 4:
            raise ShapeError(f"weights must be 4 x D, got shape {self.weights.shape}")
        if self.biases.shape != (4,):
            raise ShapeError(f"biases must have length 4, got shape {self.biases.shape}")
        if self.ridge_lambda <= 0:
            raise DomainError(f"ridge_lambda must be positive, got {self.ridge_lambda}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("regressor parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def predict(self, feature) -> np.ndarray:
        x = np.asarray(feature, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise ShapeError(f"feature dim {x.shape[0]} != regressor dim {self.dim}")
        return self.weights @ x + self.biases

    def refine(self, box: Box, feature) -> Box:
        return apply_transform(box, self.predict(feature))


def regression_objective(reg: BoxRegressor, features, targets) -> float:
    """Mean squared residual plus ridge penalty, summed over the 4 heads."""
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    resid = x @ reg.weights.T + reg.biases - t
    return float(
        (resid**2).mean(axis=0).sum()
        + reg.ridge_lambda * (reg.weights**2).sum()
    )


def train_regressor(features, targets, ridge_lambda: float) -> BoxRegressor:
    """Fit the four ridge heads by solving the normal equations per target.

    Minimizes (1/N) * sum_j (w.x_j + b - t_j)^2 + ridge_lambda * ||w||^2
    independently for each target dimension; biases are unregularized.
    """
    if ridge_lambda <= 0:
        raise DomainError(f"ridge_lambda must be positive, got {ridge_lambda}")
    x = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be an N x D matrix, got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyInputError("no regression samples")
    if t.shape != (x.shape[0], 4):
        raise ShapeError(f"targets must be N x 4, got shape {t.shape}")

    n, d = x.shape
    # Augmented normal equations over [w; b] with the penalty on w only.
    xtx = x.T @ x / n
    xm = x.mean(axis=0)
    a = np.empty((d + 1, d + 1))
    a[:d, :d] = xtx + ridge_lambda * np.eye(d)
    a[:d, d] = xm
    a[d, :d] = xm
    a[d, d] = 1.0
    rhs = np.empty((d + 1, 4))
    rhs[:d] = x.T @ t / n
    rhs[d] = t.mean(axis=0)
    solution = np.linalg.solve(a, rhs)
    return BoxRegressor(
        weights=solution[:d].T, biases=solution[d], ridge_lambda=ridge_lambda
    )


# -- model files -----------------------------------------------------------------


def save_model(model: LinearModel, path) -> None:
    """LMOD1 container: magic, u32 D, D f64 weights, f64 bias, u32 class_id."""
    try:
        with open(path, "wb") as fh:
            fh.write(_LMOD_MAGIC)
            fh.write(struct.pack("<I", model.dim))
            fh.write(model.weights.astype("<f8", copy=False).tobytes())
            fh.write(struct.pack("<d", model.bias))
            fh.write(struct.pack("<I", model.class_id))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> LinearModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:5] != _LMOD_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:5]!r}")
    if len(blob) < 9:
        raise TruncationError(f"{path}: header truncated")
    (dim,) = struct.unpack_from("<I", blob, 5)
    expected = 5 + 4 + 8 * dim + 8 + 4
    if len(blob) != expected:
        raise TruncationError(f"{path}: expected {expected} bytes, got {len(blob)}")
    weights = np.frombuffer(blob, dtype="<f8", count=dim, offset=9)
    (bias,) = struct.unpack_from("<d", blob, 9 + 8 * dim)
    (class_id,) = struct.unpack_from("<I", blob, 9 + 8 * dim + 8)
    return LinearModel(weights=weights.copy(), bias=bias, class_id=class_id)


def save_regressor(reg: BoxRegressor, path) -> None:
    """RMOD1 container: magic, u32 D, 4 rows of D f64, 4 f64 biases, f64 lambda."""
    try:
        with open(path, "wb") as fh:
            fh.write(_RMOD_MAGIC)
            fh.write(struct.pack("<I", reg.dim))
            fh.write(np.ascontiguousarray(reg.weights, dtype="<f8").tobytes())
            fh.write(reg.biases.astype("<f8", copy=False).tobytes())
            fh.write(struct.pack("<d", reg.ridge_lambda))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_regressor(path) -> BoxRegressor:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:5] != _RMOD_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:5]!r}")
    if len(blob) < 9:
        raise TruncationError(f"{path}: header truncated")
    (dim,) = struct.unpack_from("<I", blob, 5)
    expected = 5 + 4 + 8 * dim * 4 + 8 * 4 + 8
    if len(blob) != expected:
        raise TruncationError(f"{path}: expected {expected} bytes, got {len(blob)}")
    weights = np.frombuffer(blob, dtype="<f8", count=4 * dim, offset=9).reshape(4, dim)
    biases = np.frombuffer(blob, dtype="<f8", count=4, offset=9 + 32 * dim)
    (lam,) = struct.unpack_from("<d", blob, 9 + 32 * dim + 32)
    return BoxRegressor(weights=weights.copy(), biases=biases.copy(), ridge_lambda=lam)
