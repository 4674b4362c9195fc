"""End-to-end experiment orchestration with reproducible artifacts.

A run executes: channel stats -> variance profile -> per-class masks ->
edited training sets -> one-vs-rest SVMs plus box regressors -> test scoring
-> box refinement -> per-image NMS -> average precision. Every intermediate
is persisted, and a manifest records the resolved configuration, a hash of
it, and checksums of all files, so identical configurations reproduce
byte-identical outputs (no timestamps are written anywhere).

Training-set variants mirror the experiment matrix:

  * original:     unedited features only.
  * edited_only:  variance-guided edited features only.
  * merged:       original plus edited features concatenated.
  * random_edit:  features with uniformly random unit drops only.

How negatives are edited for class C's classifier is configurable
(`negative_edit`): "classifier-class" applies C's mask to every sample fed
to that classifier, "own-class" applies each sample's own class mask, and
"none" edits only the positives.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .edit import (
    EditConfig,
    EditMask,
    build_all_masks,
    edit_dataset,
    random_edit,
    variance_profile,
    write_masks_csv,
)
from .errors import ConfigError
from .evaluate import EvalConfig, evaluate, iou, nms_all, write_eval_csv, write_pr_csv
from .linear import (
    BoxRegressor,
    LinearModel,
    SvmConfig,
    box_targets,
    save_model,
    save_regressor,
    train_regressor,
    train_svm_binary,
)
from .stats import rank_channel_activations, stats_matrix, write_stats_csv
from .store import (
    Dataset,
    DetectionRecord,
    GroundTruthBox,
    LabeledSample,
    read_dataset,
    read_ground_truth,
    write_dataset,
    write_detections,
)
from .synth import planted_recovery

VARIANTS = ("original", "edited_only", "merged", "random_edit")
NEGATIVE_EDIT_MODES = ("classifier-class", "own-class", "none")


@dataclass
class RunConfig:
    train_path: str
    test_path: str
    out_dir: str
    variant: str = "merged"
    train_gt_path: str | None = None
    test_gt_path: str | None = None
    roles_path: str | None = None
    edit: EditConfig = field(default_factory=EditConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    negative_edit: str = "classifier-class"
    random_drop_ratio: float = 0.5
    regress_lambda: float = 1e-4
    regress_min_iou: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.negative_edit not in NEGATIVE_EDIT_MODES:
            raise ConfigError(
                f"negative_edit must be one of {NEGATIVE_EDIT_MODES}, got {self.negative_edit!r}"
            )
        if not 0.0 <= self.random_drop_ratio < 1.0:
            raise ConfigError(
                f"random_drop_ratio must lie in [0, 1), got {self.random_drop_ratio}"
            )
        if self.regress_lambda <= 0:
            raise ConfigError(f"regress_lambda must be positive, got {self.regress_lambda}")
        if not 0.0 < self.regress_min_iou < 1.0:
            raise ConfigError(
                f"regress_min_iou must lie in (0, 1), got {self.regress_min_iou}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _keep_to_unit_mask(keep: np.ndarray, units_per_channel: int) -> np.ndarray:
    return np.repeat(keep.astype(np.float64), units_per_channel)


def _edited_matrix(x: np.ndarray, labels: np.ndarray, masks: list[EditMask],
                   classifier_class: int, mode: str, units: int) -> np.ndarray:
    """Edited copy of the flattened feature matrix for one classifier."""
    by_class = {m.class_id: m for m in masks}
    if mode == "classifier-class":
        return x * _keep_to_unit_mask(by_class[classifier_class].keep, units)
    out = x.copy()
    for cls, mask in by_class.items():
        unit_mask = _keep_to_unit_mask(mask.keep, units)
        if mode == "own-class":
            rows = labels == cls
        else:  # "none": edit positives only
            rows = (labels == cls) & (cls == classifier_class)
        out[rows] *= unit_mask
    return out


def _random_edited_dataset(dataset: Dataset, ratio: float, seed: int) -> Dataset:
    rng = np.random.default_rng([seed, 931])
    samples = [
        LabeledSample(
            feature=random_edit(s.feature, ratio, rng),
            class_id=s.class_id,
            box=s.box,
            image_id=s.image_id,
            difficult=s.difficult,
        )
        for s in dataset
    ]
    return Dataset(samples=samples, num_classes=dataset.num_classes)


def _gt_from_samples(dataset: Dataset) -> list[GroundTruthBox]:
    return [
        GroundTruthBox(image_id=s.image_id, class_id=s.class_id, box=s.box,
                       difficult=s.difficult)
        for s in dataset
    ]


def _pair_regression_targets(dataset: Dataset, ground_truth: list[GroundTruthBox],
                             min_iou: float):
    """Per class: (row indices, 4-target rows) for proposals near same-class gt."""
    gt_by_key: dict[tuple[int, int], list[GroundTruthBox]] = {}
    for g in ground_truth:
        gt_by_key.setdefault((g.image_id, g.class_id), []).append(g)
    pairs: dict[int, tuple[list[int], list[tuple[float, float, float, float]]]] = {}
    for idx, sample in enumerate(dataset):
        candidates = gt_by_key.get((sample.image_id, sample.class_id), [])
        best = None
        best_iou = min_iou
        for g in candidates:
            overlap = iou(sample.box, g.box)
            if overlap >= best_iou:
                best_iou = overlap
                best = g
        if best is None:
            continue
        rows, targets = pairs.setdefault(sample.class_id, ([], []))
        rows.append(idx)
        targets.append(box_targets(sample.box, best.box))
    return pairs


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute all stages and return the report dict (also written to disk)."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    train = read_dataset(cfg.train_path)
    test = read_dataset(cfg.test_path)
    t = train.num_classes
    units = train.spatial * train.spatial

    train_gt = (
        read_ground_truth(cfg.train_gt_path) if cfg.train_gt_path
        else _gt_from_samples(train)
    )
    test_gt = (
        read_ground_truth(cfg.test_gt_path) if cfg.test_gt_path
        else _gt_from_samples(test)
    )

    stages: dict[str, str] = {}
    outputs: list[Path] = []

    stats = stats_matrix(train)
    stats_path = out / "stats.csv"
    write_stats_csv(stats, stats_path)
    outputs.append(stats_path)
    stages["stats"] = "done"

    labels = train.labels()
    x_train = train.feature_matrix()

    masks: list[EditMask] | None = None
    recovery = None
    if cfg.variant in ("edited_only", "merged"):
        profile = variance_profile(stats, labels, t)
        masks = build_all_masks(profile, cfg.edit)
        masks_path = out / "masks.csv"
        write_masks_csv(masks, masks_path)
        outputs.append(masks_path)
        edited_path = out / "edited.feat"
        write_dataset(edit_dataset(train, masks), edited_path)
        outputs.append(edited_path)
        stages["edit"] = "done"
        if cfg.roles_path:
            roles = json.loads(Path(cfg.roles_path).read_text())
            recovery = planted_recovery(masks, roles)
    elif cfg.variant == "random_edit":
        edited = _random_edited_dataset(train, cfg.random_drop_ratio, cfg.seed)
        edited_path = out / "edited.feat"
        write_dataset(edited, edited_path)
        outputs.append(edited_path)
        x_random = edited.feature_matrix()
        stages["edit"] = "done (random)"
    else:
        stages["edit"] = "skipped"

    # Per-class one-vs-rest training sets assembled per variant.
    models: list[LinearModel] = []
    for cls in range(t):
        if cfg.variant == "original":
            x_cls, y_cls = x_train, np.where(labels == cls, 1.0, -1.0)
        elif cfg.variant == "random_edit":
            x_cls, y_cls = x_random, np.where(labels == cls, 1.0, -1.0)
        else:
            x_edit = _edited_matrix(x_train, labels, masks, cls, cfg.negative_edit, units)
            if cfg.variant == "edited_only":
                x_cls, y_cls = x_edit, np.where(labels == cls, 1.0, -1.0)
            else:
                x_cls = np.vstack([x_train, x_edit])
                y_cls = np.tile(np.where(labels == cls, 1.0, -1.0), 2)
        model = train_svm_binary(x_cls, y_cls, cfg.svm, class_id=cls)
        models.append(model)
        model_path = out / f"svm_class{cls}.lmod"
        save_model(model, model_path)
        outputs.append(model_path)
    stages["train_svm"] = "done"

    # Box regressors are trained on the original features.
    regressors: dict[int, BoxRegressor] = {}
    pairs = _pair_regression_targets(train, train_gt, cfg.regress_min_iou)
    for cls in range(t):
        if cls not in pairs:
            continue
        rows, targets = pairs[cls]
        reg = train_regressor(x_train[rows], np.asarray(targets), cfg.regress_lambda)
        regressors[cls] = reg
        reg_path = out / f"reg_class{cls}.rmod"
        save_regressor(reg, reg_path)
        outputs.append(reg_path)
    stages["train_regressor"] = (
        "done" if regressors else "skipped (no proposals matched ground truth)"
    )

    # Score the (unedited) test set with every class head.
    x_test = test.feature_matrix()
    weight_matrix = np.stack([m.weights for m in models])
    bias_vector = np.array([m.bias for m in models])
    score_table = x_test @ weight_matrix.T + bias_vector

    predicted = score_table.argmax(axis=1)
    test_labels = test.labels()
    accuracy = float((predicted == test_labels).mean())

    detections = []
    for i, sample in enumerate(test):
        for cls in range(t):
            box = sample.box
            if cls in regressors:
                box = regressors[cls].refine(box, x_test[i])
            detections.append(
                DetectionRecord(
                    image_id=sample.image_id,
                    class_id=cls,
                    score=float(score_table[i, cls]),
                    box=box,
                )
            )
    raw_path = out / "detections_raw.csv"
    write_detections(detections, raw_path)
    outputs.append(raw_path)
    stages["predict"] = "done"

    kept = nms_all(detections, cfg.eval.nms_iou)
    nms_path = out / "detections_nms.csv"
    write_detections(kept, nms_path)
    outputs.append(nms_path)
    stages["nms"] = "done"

    report_eval = evaluate(kept, test_gt, cfg.eval, t)
    eval_path = out / "eval.csv"
    write_eval_csv(report_eval, eval_path)
    outputs.append(eval_path)
    for cls, curve in enumerate(report_eval.per_class):
        pr_path = out / f"pr_class{cls}.csv"
        write_pr_csv(curve, pr_path)
        outputs.append(pr_path)
    stages["eval"] = "done"

    report = {
        "variant": cfg.variant,
        "stages": stages,
        "num_classes": t,
        "train_samples": len(train),
        "test_samples": len(test),
        "accuracy": accuracy,
        "per_class_ap": [c.ap for c in report_eval.per_class],
        "mean_ap": report_eval.mean_ap,
        "kernel_backend": _kernels.backend(),
    }
    if recovery is not None:
        report["planted_recovery"] = {
            "noisy_recall": recovery.noisy_recall,
            "flat_recall": recovery.flat_recall,
            "friendly_dropped_frac": recovery.friendly_dropped_frac,
        }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    outputs.append(report_path)

    inputs = [Path(cfg.train_path), Path(cfg.test_path)]
    for extra in (cfg.train_gt_path, cfg.test_gt_path, cfg.roles_path):
        if extra:
            inputs.append(Path(extra))
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "kernel_backend": _kernels.backend(),
        "inputs": {p.name: _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in sorted(set(outputs))},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return report


def export_drops(masks: list[EditMask], dataset: Dataset, path, k: int = 9) -> None:
    """CSV of dropped channels with their top-k exemplar sample indices.

    One row per (dropped channel, exemplar): class_id,channel,reason,rank,sample_index.
    """
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "channel", "reason", "rank", "sample_index"])
        for mask in masks:
            for channel in sorted(mask.dropped()):
                exemplars = rank_channel_activations(dataset, channel, k)
                for rank, sample_index in enumerate(exemplars):
                    writer.writerow(
                        [mask.class_id, channel, mask.reason(channel), rank, sample_index]
                    )
