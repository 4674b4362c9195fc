"""IoU, greedy non-maximum suppression, precision/recall, and average precision.

Boxes are continuous (x1, y1, x2, y2) with area (x2-x1)*(y2-y1). Matching
follows the usual one-to-one protocol: detections in descending score order
claim the unmatched non-difficult ground truth of highest IoU at or above the
match threshold; a detection whose only qualifying overlap is a difficult
ground truth counts neither as true nor as false positive. Difficult ground
truth is also excluded from the recall denominator.

AP comes in two flavors: `eleven_point` averages the best precision at
recalls {0.0, 0.1, ..., 1.0}; `continuous` integrates the monotone precision
envelope over recall.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ClassIdError, ConfigError, InputContractError, IoError
from .store import Box, DetectionRecord, GroundTruthBox

_AP_MODES = ("eleven_point", "continuous")


@dataclass
class EvalConfig:
    nms_iou: float = 0.30
    match_iou: float = 0.50
    ap_mode: str = "eleven_point"

    def __post_init__(self):
        for name in ("nms_iou", "match_iou"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.ap_mode not in _AP_MODES:
            raise ConfigError(f"ap_mode must be one of {_AP_MODES}, got {self.ap_mode!r}")


@dataclass
class PrCurve:
    """Cumulative precision/recall points of one class plus its AP."""

    recall: np.ndarray
    precision: np.ndarray
    ap: float
    num_tp: int
    num_fp: int
    num_gt: int
    zero_gt_warning: bool = False


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area, in [0, 1]."""
    ix1 = max(a[0], b[0])
    iy1 = max(a[1], b[1])
    ix2 = min(a[2], b[2])
    iy2 = min(a[3], b[3])
    iw = max(ix2 - ix1, 0.0)
    ih = max(iy2 - iy1, 0.0)
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def nms(detections: list[DetectionRecord], iou_thresh: float) -> list[DetectionRecord]:
    """Greedy suppression of one image's one-class detections.

    Keeps the highest-score remaining detection, discards the rest whose IoU
    with it strictly exceeds the threshold, repeats. Score ties break toward
    the earlier list index; output is sorted by descending score.
    """
    if not detections:
        return []
    images = {d.image_id for d in detections}
    classes = {d.class_id for d in detections}
    if len(images) > 1 or len(classes) > 1:
        raise InputContractError(
            f"nms input mixes image ids {sorted(images)} / class ids {sorted(classes)}"
        )
    boxes = np.array([d.box for d in detections], dtype=np.float64)
    scores = np.array([d.score for d in detections], dtype=np.float64)
    kept = _kernels.nms_keep(boxes, scores, float(iou_thresh))
    return [detections[i] for i in kept]


def nms_all(detections: list[DetectionRecord], iou_thresh: float) -> list[DetectionRecord]:
    """Apply nms per (image, class) group, preserving group order by key."""
    groups: dict[tuple[int, int], list[DetectionRecord]] = {}
    for d in detections:
        groups.setdefault((d.image_id, d.class_id), []).append(d)
    out = []
    for key in sorted(groups):
        out.extend(nms(groups[key], iou_thresh))
    return out


def _eleven_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        mask = recall >= r
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / 11.0


def _continuous_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]).sum())


def average_precision(
    detections: list[DetectionRecord],
    ground_truth: list[GroundTruthBox],
    cfg: EvalConfig,
) -> PrCurve:
    """Match one class's detections against its ground truth and compute AP.

    All records must already be filtered to a single class; images are
    distinguished by image_id.
    """
    gt_by_image: dict[int, list[GroundTruthBox]] = {}
    for g in ground_truth:
        gt_by_image.setdefault(g.image_id, []).append(g)
    matched: dict[tuple[int, int], bool] = {}
    num_gt = sum(1 for g in ground_truth if not g.difficult)

    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    tp = np.zeros(len(order))
    fp = np.zeros(len(order))
    rank = 0
    for i in order:
        det = detections[i]
        candidates = gt_by_image.get(det.image_id, [])
        best_iou = -1.0
        best_j = -1
        difficult_hit = False
        for j, g in enumerate(candidates):
            overlap = iou(det.box, g.box)
            if overlap < cfg.match_iou:
                continue
            if g.difficult:
                difficult_hit = True
            elif not matched.get((det.image_id, j), False) and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            matched[(det.image_id, best_j)] = True
            tp[rank] = 1.0
        elif not difficult_hit:
            fp[rank] = 1.0
        rank += 1

    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    if num_gt > 0:
        recall = tp_cum / num_gt
    else:
        recall = np.zeros_like(tp_cum)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-300)

    zero_gt = num_gt == 0
    if len(order) == 0 or zero_gt:
        ap = 0.0
    elif cfg.ap_mode == "eleven_point":
        ap = _eleven_point_ap(recall, precision)
    else:
        ap = _continuous_ap(recall, precision)
    return PrCurve(
        recall=recall,
        precision=precision,
        ap=ap,
        num_tp=int(tp_cum[-1]) if len(order) else 0,
        num_fp=int(fp_cum[-1]) if len(order) else 0,
        num_gt=num_gt,
        zero_gt_warning=zero_gt,
    )


@dataclass
class EvalReport:
    """Per-class PR curves plus the unweighted mean AP over all classes."""

    per_class: list[PrCurve]
    mean_ap: float


def evaluate(
    detections: list[DetectionRecord],
    ground_truth: list[GroundTruthBox],
    cfg: EvalConfig,
    num_classes: int,
) -> EvalReport:
    """Per-class AP over all declared classes plus their unweighted mean."""
    for d in detections:
        if not 0 <= d.class_id < num_classes:
            raise ClassIdError(f"detection class id {d.class_id} outside [0, {num_classes})")
    for g in ground_truth:
        if not 0 <= g.class_id < num_classes:
            raise ClassIdError(f"ground truth class id {g.class_id} outside [0, {num_classes})")
    curves = []
    for cls in range(num_classes):
        dets = [d for d in detections if d.class_id == cls]
        gts = [g for g in ground_truth if g.class_id == cls]
        curves.append(average_precision(dets, gts, cfg))
    mean_ap = float(np.mean([c.ap for c in curves])) if curves else 0.0
    return EvalReport(per_class=curves, mean_ap=mean_ap)


# -- CSV exports -----------------------------------------------------------------


def write_eval_csv(report: EvalReport, path) -> None:
    """Export `class_id,ap,num_gt,num_tp,num_fp` per class."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_id", "ap", "num_gt", "num_tp", "num_fp"])
            for cls, curve in enumerate(report.per_class):
                writer.writerow(
                    [cls, format(curve.ap, ".17g"), curve.num_gt, curve.num_tp, curve.num_fp]
                )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_pr_csv(curve: PrCurve, path) -> None:
    """Export one class's `recall,precision` points in rank order."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["recall", "precision"])
            for r, p in zip(curve.recall, curve.precision):
                writer.writerow([format(r, ".17g"), format(p, ".17g")])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
